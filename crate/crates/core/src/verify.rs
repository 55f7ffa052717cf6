//! Built-in verification scenarios, runnable without any input files.

use std::fmt;
use std::str::FromStr;

use crate::grid::{lp_norm, Field, Grid, State};
use crate::model::{select_energy_exponent, Params};
use crate::monitors::{energy_plateau, DiagnosticsRecord};
use crate::stepper::{run, RunError, RunOptions, Scheme, StepControl};
use crate::sweep::Preset;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Mass,
    Steady,
    Convergence,
    Energy,
}

impl Suite {
    pub const ALL: [Suite; 4] = [
        Suite::Mass,
        Suite::Steady,
        Suite::Convergence,
        Suite::Energy,
    ];
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Suite::Mass => "mass",
            Suite::Steady => "steady",
            Suite::Convergence => "convergence",
            Suite::Energy => "energy",
        })
    }
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Suite::ALL
            .into_iter()
            .find(|suite| suite.to_string() == s)
            .ok_or_else(|| {
                format!("unknown suite '{s}' (expected mass, steady, convergence or energy)")
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: String) -> Self {
        Self {
            name: name.into(),
            passed,
            detail,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub suite: Suite,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let tag = if c.passed { "PASS" } else { "FAIL" };
            writeln!(f, "[{tag}] {}/{}: {}", self.suite, c.name, c.detail)?;
        }
        Ok(())
    }
}

pub fn run_suite(suite: Suite) -> Result<Report, RunError> {
    let checks = match suite {
        Suite::Mass => mass()?,
        Suite::Steady => steady()?,
        Suite::Convergence => convergence()?,
        Suite::Energy => energy()?,
    };
    Ok(Report { suite, checks })
}

fn params(alpha: f64, kappa: f64) -> Params {
    Params::new(alpha, kappa).expect("built-in parameters are valid")
}

fn mass() -> Result<Vec<Check>, RunError> {
    let mut checks = Vec::new();

    // Zero data, explicit scheme: ∫u + ∫v must follow 1 - e^{-t}.
    let grid = Grid::uniform(1, 128)?;
    let p = params(1.0, 1.0);
    let control = StepControl::with_scheme(Scheme::ExplicitEuler);
    let out = run(
        &State::uniform(&grid, 0.0, 0.0, 0.0),
        &p,
        &grid,
        &control,
        &RunOptions::new(5.0, 0.1),
    )?;
    let bound = 5.0 * out.stats.dt_max * (p.kappa * grid.volume());
    let worst = out
        .records
        .iter()
        .map(|r| r.mass_identity_residual.abs())
        .fold(0.0, f64::max);
    checks.push(Check::new(
        "identity-residual",
        worst <= bound,
        format!("max |residual| = {worst:.3e}, bound {bound:.3e}"),
    ));
    let last = out.records.last().expect("nonempty run");
    let err = (last.mass_u + last.mass_v - (1.0 - (-5.0f64).exp())).abs();
    checks.push(Check::new(
        "final-mass",
        err <= 1e-3,
        format!("|∫u + ∫v - (1 - e^-5)| = {err:.3e}"),
    ));

    // u-mass envelope for a bump in v.
    for (ndim, cells) in [(1, 64), (2, 32)] {
        let grid = Grid::uniform(ndim, cells)?;
        for kappa in [0.0, 1.0] {
            let p = params(1.0, kappa);
            let control = StepControl {
                dt_max: 1e-3,
                ..StepControl::default()
            };
            let initial = Preset::GaussianBumpV.build(&grid, kappa, 0);
            let out = run(&initial, &p, &grid, &control, &RunOptions::new(5.0, 0.1))?;
            let slack = out
                .records
                .iter()
                .map(|r| r.u_bound_slack)
                .fold(f64::INFINITY, f64::min);
            checks.push(Check::new(
                format!("u-envelope n={ndim} kappa={kappa}"),
                slack >= -1e-3,
                format!("min slack = {slack:.3e}"),
            ));
        }
    }
    Ok(checks)
}

fn relative_drift(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

fn record_values(r: &DiagnosticsRecord) -> Vec<(&'static str, f64)> {
    let mut v = vec![
        ("mass_u", r.mass_u),
        ("mass_v", r.mass_v),
        ("mass_w", r.mass_w),
        ("sup_u", r.sup_u),
        ("sup_v", r.sup_v),
        ("sup_w", r.sup_w),
        ("grad_v_sq", r.grad_v_sq),
        ("grad_w_sq", r.grad_w_sq),
    ];
    if let Some(x) = r.lp_u {
        v.push(("lp_u", x));
    }
    if let Some(x) = r.energy {
        v.push(("energy", x));
    }
    v
}

fn steady() -> Result<Vec<Check>, RunError> {
    let grid = Grid::uniform(1, 64)?;
    let p = params(1.0, 2.0);
    let initial = Preset::SteadyInfectionFree.build(&grid, 2.0, 0);
    let out = run(
        &initial,
        &p,
        &grid,
        &StepControl::default(),
        &RunOptions::new(10.0, 0.1),
    )?;
    let first = record_values(&out.records[0]);
    let mut worst = (0.0, "none");
    for r in &out.records {
        for ((name, x), (_, x0)) in record_values(r).into_iter().zip(&first) {
            let d = relative_drift(x, *x0);
            if d > worst.0 {
                worst = (d, name);
            }
        }
    }
    Ok(vec![Check::new(
        "fixed-point",
        worst.0 <= 1e-10,
        format!(
            "max relative drift {:.3e} ({}) over {} records",
            worst.0,
            worst.1,
            out.records.len()
        ),
    )])
}

/// L∞ error at `t_end` for `u0 = 1 + cos(πx)` with `v = w = 0` and `kappa = 0`,
/// where `u = e^{-t} + e^{-(1+π²)t} cos(πx)` exactly.
pub fn diffusion_decay_error(cells: usize, t_end: f64) -> Result<f64, RunError> {
    use std::f64::consts::PI;
    let grid = Grid::uniform(1, cells)?;
    let h = grid.spacing()[0];
    let u0 = Field::from_fn(&grid, |x| 1.0 + (PI * x[0]).cos());
    let zero = Field::zeros(&grid);
    let initial = State::new(u0, zero.clone(), zero, 0.0);
    let control = StepControl {
        dt_max: h * h,
        ..StepControl::default()
    };
    let out = run(
        &initial,
        &params(1.0, 0.0),
        &grid,
        &control,
        &RunOptions::new(t_end, t_end),
    )?;
    let t = out.final_state.t;
    let exact = Field::from_fn(&grid, |x| {
        (-t).exp() + (-(1.0 + PI * PI) * t).exp() * (PI * x[0]).cos()
    });
    let err = out.final_state.u.axpby(1.0, &exact, -1.0);
    Ok(lp_norm(&err, &grid, f64::INFINITY)?)
}

fn convergence() -> Result<Vec<Check>, RunError> {
    let cells = [32, 64, 128];
    let errors = cells
        .iter()
        .map(|&n| diffusion_decay_error(n, 0.1))
        .collect::<Result<Vec<_>, _>>()?;
    let mut checks = Vec::new();
    for i in 1..errors.len() {
        let order = (errors[i - 1] / errors[i]).log2();
        checks.push(Check::new(
            format!("order {}->{}", cells[i - 1], cells[i]),
            order >= 1.9,
            format!(
                "errors {:.3e} -> {:.3e}, order {order:.3}",
                errors[i - 1],
                errors[i]
            ),
        ));
    }
    Ok(checks)
}

fn energy() -> Result<Vec<Check>, RunError> {
    let grid = Grid::uniform(2, 64)?;
    let kappa = 2.0;
    let p = params(1.0, kappa);
    let exponent = select_energy_exponent(1.0, 2).expect("alpha = 1 is above the 2D threshold");
    let initial = Preset::GaussianBumpV.build(&grid, kappa, 0);
    let options = RunOptions {
        energy_exponent: Some(exponent.p),
        ..RunOptions::new(20.0, 0.1)
    };
    let out = run(&initial, &p, &grid, &StepControl::default(), &options)?;
    let plateau = energy_plateau(&out.records, 0.2);
    Ok(vec![match plateau {
        Some(pl) => Check::new(
            "plateau",
            pl.holds(0.01),
            format!(
                "p = {}, head max {:.6e}, tail max {:.6e}",
                exponent.p, pl.head_max, pl.tail_max
            ),
        ),
        None => Check::new("plateau", false, "energy not recorded".into()),
    }])
}
