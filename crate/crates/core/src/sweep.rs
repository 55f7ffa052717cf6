//! Initial-condition presets and `alpha` sweeps.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Field, Grid, State};
use crate::model::{
    alpha_above_threshold, select_energy_exponent, Coefficients, ModelError, Params,
};
use crate::monitors::{classify_boundedness, ClassifierConfig, Verdict};
use crate::stepper::{run, RunOptions, StepControl};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SweepError {
    #[error("unknown initial-condition preset '{0}' (expected steady-infection-free, gaussian-bump-v, random-smooth or constant(u, v, w))")]
    UnknownPreset(String),
    #[error("invalid preset '{preset}': {reason}")]
    InvalidPreset { preset: String, reason: String },
    #[error("sweep needs at least one alpha value")]
    NoAlphas,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("could not start worker pool: {0}")]
    Pool(String),
}

/// Named families of nonnegative, bounded, continuous initial data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Preset {
    /// `(kappa, 0, 0)`
    SteadyInfectionFree,
    /// `u = kappa + 1`, `v = exp(-50|x - c|²)` around the box centre `c`, `w = 0`.
    GaussianBumpV,
    /// Seeded cosine series with positive offset in every component.
    RandomSmooth,
    Constant {
        u: f64,
        v: f64,
        w: f64,
    },
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Preset::SteadyInfectionFree => f.write_str("steady-infection-free"),
            Preset::GaussianBumpV => f.write_str("gaussian-bump-v"),
            Preset::RandomSmooth => f.write_str("random-smooth"),
            Preset::Constant { u, v, w } => write!(f, "constant({u}, {v}, {w})"),
        }
    }
}

impl FromStr for Preset {
    type Err = SweepError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        match s {
            "steady-infection-free" => return Ok(Preset::SteadyInfectionFree),
            "gaussian-bump-v" => return Ok(Preset::GaussianBumpV),
            "random-smooth" => return Ok(Preset::RandomSmooth),
            _ => {}
        }
        let args = s
            .strip_prefix("constant")
            .map(str::trim_start)
            .and_then(|r| r.strip_prefix('('))
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(|| SweepError::UnknownPreset(s.to_string()))?;
        let invalid = |reason: &str| SweepError::InvalidPreset {
            preset: s.to_string(),
            reason: reason.to_string(),
        };
        let vals: Vec<f64> = args
            .split(',')
            .map(|a| a.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| invalid("arguments must be numbers"))?;
        match vals[..] {
            [u, v, w] if [u, v, w].iter().all(|x| x.is_finite() && *x >= 0.0) => {
                Ok(Preset::Constant { u, v, w })
            }
            [_, _, _] => Err(invalid("values must be finite and nonnegative")),
            _ => Err(invalid("expected three values")),
        }
    }
}

/// Smooth field in `[0, 1]`: a normalised sum of low cosine modes along each
/// axis. Cosines have zero normal derivative on the walls.
fn smooth_unit_field(grid: &Grid, rng: &mut ChaCha8Rng) -> Field {
    const MODES: usize = 3;
    let coeffs: Vec<Vec<f64>> = (0..grid.ndim())
        .map(|_| (0..MODES).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let raw = Field::from_fn(grid, |x| {
        coeffs
            .iter()
            .zip(x)
            .zip(grid.lengths())
            .map(|((a, &xk), &len)| {
                a.iter()
                    .enumerate()
                    .map(|(m, am)| am * ((m + 1) as f64 * std::f64::consts::PI * xk / len).cos())
                    .sum::<f64>()
            })
            .sum()
    });
    let (lo, hi) = (raw.min(), raw.max());
    if hi > lo {
        raw.map(|r| (r - lo) / (hi - lo))
    } else {
        Field::zeros(grid)
    }
}

impl Preset {
    /// Builds the initial state. `seed` selects the data of `random-smooth`
    /// and is ignored by the other presets.
    pub fn build(&self, grid: &Grid, kappa: f64, seed: u64) -> State {
        match *self {
            Preset::SteadyInfectionFree => State::uniform(grid, kappa, 0.0, 0.0),
            Preset::GaussianBumpV => {
                let centre: Vec<f64> = grid.lengths().iter().map(|l| l / 2.0).collect();
                let v = Field::from_fn(grid, |x| {
                    let r2: f64 = x.iter().zip(&centre).map(|(a, c)| (a - c) * (a - c)).sum();
                    (-50.0 * r2).exp()
                });
                State::new(
                    Field::constant(grid, kappa + 1.0),
                    v,
                    Field::zeros(grid),
                    0.0,
                )
            }
            Preset::RandomSmooth => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let component = |rng: &mut ChaCha8Rng| {
                    let offset = rng.gen_range(0.1..1.0);
                    let amplitude = rng.gen_range(0.0..2.0);
                    smooth_unit_field(grid, rng).map(|s| offset + amplitude * s)
                };
                let u = component(&mut rng);
                let v = component(&mut rng);
                let w = component(&mut rng);
                State::new(u, v, w, 0.0)
            }
            Preset::Constant { u, v, w } => State::uniform(grid, u, v, w),
        }
    }
}

/// Builds a preset by name, with seed 0 for `random-smooth`.
pub fn initial_condition_preset(name: &str, grid: &Grid, kappa: f64) -> Result<State, SweepError> {
    Ok(name.parse::<Preset>()?.build(grid, kappa, 0))
}

/// Adds `amplitude · s(x)` to `u`, with `s` a seeded smooth field in `[0, 1]`.
pub fn perturb(state: &State, grid: &Grid, seed: u64, amplitude: f64) -> State {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let bump = smooth_unit_field(grid, &mut rng);
    State {
        u: state.u.axpby(1.0, &bump, amplitude),
        ..state.clone()
    }
}

/// Everything except `alpha` that defines a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub grid: Grid,
    pub kappa: f64,
    pub coeffs: Coefficients,
    pub preset: Preset,
    pub t_end: f64,
    pub monitor_every: f64,
    pub control: StepControl,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub alpha_values: Vec<f64>,
    pub scenario: Scenario,
    /// One row per `(alpha, seed)`. With no seeds, one unperturbed row per `alpha`.
    pub seeds: Vec<u64>,
    /// Amplitude of the seeded perturbation of `u` (presets other than `random-smooth`).
    pub perturbation: f64,
    pub classifier: ClassifierConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub seed: Option<u64>,
    pub above_threshold: bool,
    pub p_feasible: bool,
    pub p_value: Option<f64>,
    pub verdict: Option<Verdict>,
    pub peak_sup_u: Option<f64>,
    pub energy_max: Option<f64>,
    pub run_status: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

pub const SWEEP_CSV_HEADER: &str =
    "alpha,seed,above_threshold,p_feasible,p_value,verdict,peak_sup_u,energy_max,run_status";

impl SweepResult {
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(writer);
        w.write_record(SWEEP_CSV_HEADER.split(','))?;
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(reader: R) -> csv::Result<Self> {
        let rows = csv::Reader::from_reader(reader)
            .deserialize()
            .collect::<csv::Result<_>>()?;
        Ok(Self { rows })
    }
}

fn run_row(spec: &SweepSpec, alpha: f64, seed: Option<u64>) -> Result<SweepRow, SweepError> {
    let sc = &spec.scenario;
    let ndim = sc.grid.ndim() as u32;
    let exponent = select_energy_exponent(alpha, ndim).ok();
    let mut row = SweepRow {
        alpha,
        seed,
        above_threshold: alpha_above_threshold(alpha, ndim)?,
        p_feasible: exponent.is_some(),
        p_value: exponent.map(|e| e.p),
        verdict: None,
        peak_sup_u: None,
        energy_max: None,
        run_status: String::new(),
    };
    let params = match Params::with_coefficients(alpha, sc.kappa, sc.coeffs) {
        Ok(p) => p,
        Err(e) => {
            row.run_status = format!("failed: {e}");
            return Ok(row);
        }
    };
    let mut initial = sc.preset.build(&sc.grid, sc.kappa, seed.unwrap_or(0));
    if let (Some(seed), false) = (seed, sc.preset == Preset::RandomSmooth) {
        initial = perturb(&initial, &sc.grid, seed, spec.perturbation);
    }
    let options = RunOptions::new(sc.t_end, sc.monitor_every);
    match run(&initial, &params, &sc.grid, &sc.control, &options) {
        Ok(out) => {
            row.peak_sup_u = out.records.iter().map(|r| r.sup_u).reduce(f64::max);
            row.energy_max = out.records.iter().filter_map(|r| r.energy).reduce(f64::max);
            match classify_boundedness(&out.records, &spec.classifier) {
                Ok(v) => {
                    row.verdict = Some(v.label);
                    row.run_status = "ok".into();
                }
                Err(e) => row.run_status = format!("unclassified: {e}"),
            }
        }
        Err(e) => row.run_status = format!("failed: {e}"),
    }
    Ok(row)
}

/// Runs every `(alpha, seed)` pair, in parallel on at most `jobs` threads.
/// Rows come back in `(alpha, seed)` order regardless of scheduling; a
/// failing run becomes a row with a `failed:` status.
pub fn run_sweep(spec: &SweepSpec, jobs: Option<usize>) -> Result<SweepResult, SweepError> {
    if spec.alpha_values.is_empty() {
        return Err(SweepError::NoAlphas);
    }
    if let Some(a) = spec
        .alpha_values
        .iter()
        .find(|a| !(**a >= 0.0 && a.is_finite()))
    {
        return Err(ModelError::InvalidParameter {
            name: "alpha",
            value: *a,
            constraint: "finite and >= 0",
        }
        .into());
    }
    let seeds: Vec<Option<u64>> = if spec.seeds.is_empty() {
        vec![None]
    } else {
        spec.seeds.iter().copied().map(Some).collect()
    };
    let tasks: Vec<(f64, Option<u64>)> = spec
        .alpha_values
        .iter()
        .flat_map(|&a| seeds.iter().map(move |&s| (a, s)))
        .collect();

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| SweepError::Pool(e.to_string()))?;
    let rows = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(alpha, seed)| run_row(spec, alpha, seed))
            .collect::<Result<Vec<_>, _>>()
    })?;
    Ok(SweepResult { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::alpha_threshold;
    use num::BigRational;

    #[test]
    fn preset_parsing() {
        assert_eq!(
            "gaussian-bump-v".parse::<Preset>().unwrap(),
            Preset::GaussianBumpV
        );
        assert_eq!(
            " constant(1, 0.5,0) ".parse::<Preset>().unwrap(),
            Preset::Constant {
                u: 1.0,
                v: 0.5,
                w: 0.0
            }
        );
        assert!(matches!(
            "bogus".parse::<Preset>(),
            Err(SweepError::UnknownPreset(_))
        ));
        assert!(matches!(
            "constant(1,2)".parse::<Preset>(),
            Err(SweepError::InvalidPreset { .. })
        ));
        assert!(matches!(
            "constant(1,-2,0)".parse::<Preset>(),
            Err(SweepError::InvalidPreset { .. })
        ));
        for p in [
            Preset::SteadyInfectionFree,
            Preset::RandomSmooth,
            Preset::Constant {
                u: 0.1,
                v: 2.0,
                w: 1e-7,
            },
        ] {
            assert_eq!(p.to_string().parse::<Preset>().unwrap(), p);
        }
        assert!(initial_condition_preset("nope", &Grid::uniform(1, 4).unwrap(), 1.0).is_err());
    }

    #[test]
    fn preset_examples() {
        let g = Grid::uniform(2, 5).unwrap();
        let s = initial_condition_preset("steady-infection-free", &g, 1.5).unwrap();
        assert_eq!(s, State::uniform(&g, 1.5, 0.0, 0.0));

        let s = initial_condition_preset("constant(1, 2, 3)", &g, 0.0).unwrap();
        assert_eq!(s, State::uniform(&g, 1.0, 2.0, 3.0));

        let g = Grid::uniform(1, 50).unwrap();
        let s = initial_condition_preset("gaussian-bump-v", &g, 0.5).unwrap();
        assert!(s.u.values().iter().all(|&u| u == 1.5));
        assert!(s.w.values().iter().all(|&w| w == 0.0));
        for c in 0..g.len() {
            let x = g.cell_center(c)[0];
            let expected = (-50.0 * (x - 0.5) * (x - 0.5)).exp();
            assert!((s.v[c] - expected).abs() <= 1e-13 * expected, "cell {c}");
            assert!(s.v[c] > 0.0);
        }
    }

    #[test]
    fn random_smooth_is_seeded_and_positive() {
        let g = Grid::unit(&[12, 9]).unwrap();
        let a = Preset::RandomSmooth.build(&g, 1.0, 42);
        let b = Preset::RandomSmooth.build(&g, 1.0, 42);
        let c = Preset::RandomSmooth.build(&g, 1.0, 43);
        assert_eq!(a, b);
        assert_ne!(a, c);
        for seed in 0..50 {
            let s = Preset::RandomSmooth.build(&g, 0.0, seed);
            assert!(s.min_value() >= 0.1 - 1e-15, "seed {seed}");
            assert!(s.fields().iter().all(|f| f.all_finite()));
        }
    }

    #[test]
    fn perturbation_keeps_nonnegativity() {
        let g = Grid::uniform(1, 16).unwrap();
        let base = Preset::SteadyInfectionFree.build(&g, 0.0, 0);
        let p = perturb(&base, &g, 3, 0.05);
        assert!(p.u.min() >= 0.0);
        assert!(p.u.max() <= 0.05 + 1e-15);
        assert_eq!(p.v, base.v);
    }

    #[test]
    fn sweep_rejects_bad_specs() {
        let scenario = Scenario {
            grid: Grid::uniform(1, 8).unwrap(),
            kappa: 1.0,
            coeffs: Coefficients::default(),
            preset: Preset::SteadyInfectionFree,
            t_end: 1.0,
            monitor_every: 0.1,
            control: StepControl::default(),
        };
        let spec = SweepSpec {
            alpha_values: vec![],
            scenario,
            seeds: vec![],
            perturbation: 0.0,
            classifier: ClassifierConfig::default(),
        };
        assert_eq!(run_sweep(&spec, Some(1)), Err(SweepError::NoAlphas));
        let spec = SweepSpec {
            alpha_values: vec![1.0, -0.5],
            ..spec
        };
        assert!(matches!(
            run_sweep(&spec, Some(1)),
            Err(SweepError::Model(_))
        ));
    }

    #[test]
    fn sweep_csv_header() {
        let res = SweepResult {
            rows: vec![SweepRow {
                alpha: 0.1,
                seed: None,
                above_threshold: false,
                p_feasible: false,
                p_value: None,
                verdict: Some(Verdict::BoundedPlateau),
                peak_sup_u: Some(1.0),
                energy_max: None,
                run_status: "ok".into(),
            }],
        };
        let mut buf = Vec::new();
        res.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), SWEEP_CSV_HEADER);
        assert_eq!(
            lines.next().unwrap(),
            "0.1,,false,false,,bounded-plateau,1.0,,ok"
        );
        assert_eq!(SweepResult::read_csv(text.as_bytes()).unwrap(), res);
    }

    fn small_spec(alphas: Vec<f64>, preset: Preset, kappa: f64, seeds: Vec<u64>) -> SweepSpec {
        SweepSpec {
            alpha_values: alphas,
            scenario: Scenario {
                grid: Grid::uniform(2, 12).unwrap(),
                kappa,
                coeffs: Coefficients::default(),
                preset,
                t_end: 3.0,
                monitor_every: 0.1,
                control: StepControl::default(),
            },
            seeds,
            perturbation: 0.05,
            classifier: ClassifierConfig::default(),
        }
    }

    #[test]
    fn alpha_two_in_two_dimensions_is_bounded() {
        let res = run_sweep(
            &small_spec(vec![2.0], Preset::GaussianBumpV, 2.0, vec![]),
            Some(1),
        )
        .unwrap();
        let row = &res.rows[0];
        assert!(row.above_threshold && row.p_feasible);
        assert_eq!(row.p_value, Some(2.75));
        assert_eq!(row.verdict, Some(Verdict::BoundedPlateau), "{row:?}");
    }

    #[test]
    fn steady_preset_rows_stay_at_initial_peak() {
        let res = run_sweep(
            &small_spec(
                vec![0.5, 1.0, 3.0],
                Preset::SteadyInfectionFree,
                1.5,
                vec![],
            ),
            None,
        )
        .unwrap();
        assert_eq!(res.rows.len(), 3);
        for row in &res.rows {
            assert_eq!(row.verdict, Some(Verdict::BoundedPlateau));
            assert!((row.peak_sup_u.unwrap() - 1.5).abs() <= 1e-13, "{row:?}");
            assert_eq!(row.seed, None);
        }
    }

    #[test]
    fn below_threshold_rows_still_run() {
        let res = run_sweep(
            &small_spec(vec![0.1], Preset::GaussianBumpV, 1.0, vec![]),
            Some(1),
        )
        .unwrap();
        let row = &res.rows[0];
        assert!(!row.above_threshold && !row.p_feasible);
        assert_eq!(row.p_value, None);
        assert_eq!(row.energy_max, None);
        assert_eq!(row.run_status, "ok");
        assert!(row.verdict.is_some());
    }

    #[test]
    fn rows_are_deterministic_and_flags_exact() {
        let spec = small_spec(
            vec![0.75, 2.0, 0.1, 0.7500001],
            Preset::RandomSmooth,
            1.0,
            vec![3, 1],
        );
        let serial = run_sweep(&spec, Some(1)).unwrap();
        let parallel = run_sweep(&spec, Some(4)).unwrap();
        assert_eq!(serial, parallel);
        assert_eq!(serial.rows.len(), 8);
        let keys: Vec<_> = serial
            .rows
            .iter()
            .map(|r| (r.alpha, r.seed.unwrap()))
            .collect();
        assert_eq!(keys[..3], [(0.75, 3), (0.75, 1), (2.0, 3)]);
        for row in &serial.rows {
            let exact = BigRational::from_float(row.alpha).unwrap() > alpha_threshold(2).unwrap();
            assert_eq!(row.above_threshold, exact, "alpha {}", row.alpha);
        }
        // The boundary value itself is not above the threshold.
        assert!(!serial.rows[0].above_threshold);
    }
}
