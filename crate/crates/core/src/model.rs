//! Pointwise model definitions: kinetics, saturated chemotactic sensitivity,
//! the admissibility threshold on `alpha`, and energy-exponent selection.
//!
//! The system evolved by the solver is
//!
//! ```text
//! u_t = d_u Δu - ∇·(u/(1+u)^alpha ∇v) - u w + kappa - decay_u u
//! v_t = d_v Δv + u w - decay_v v
//! w_t = d_w Δw - decay_w w + production v
//! ```
//!
//! with homogeneous Neumann conditions. All coefficients default to 1.

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("concentration must be nonnegative, got {0}")]
    NegativeConcentration(f64),
    #[error("spatial dimension must be at least 1, got {0}")]
    InvalidDimension(u32),
    #[error("invalid parameter {name} = {value}: must be {constraint}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        constraint: &'static str,
    },
    #[error("no admissible energy exponent: 2*alpha = {two_alpha} does not exceed the lower bound {lower_bound}")]
    InfeasibleExponent { lower_bound: f64, two_alpha: f64 },
}

/// Positive rate constants of the system. `Default` gives the unit-coefficient model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients {
    pub d_u: f64,
    pub d_v: f64,
    pub d_w: f64,
    pub decay_u: f64,
    pub decay_v: f64,
    pub decay_w: f64,
    pub production: f64,
}

impl Default for Coefficients {
    fn default() -> Self {
        Self {
            d_u: 1.0,
            d_v: 1.0,
            d_w: 1.0,
            decay_u: 1.0,
            decay_v: 1.0,
            decay_w: 1.0,
            production: 1.0,
        }
    }
}

impl Coefficients {
    pub fn is_unit(&self) -> bool {
        *self == Self::default()
    }

    pub(crate) fn named(&self) -> [(&'static str, f64); 7] {
        [
            ("d_u", self.d_u),
            ("d_v", self.d_v),
            ("d_w", self.d_w),
            ("decay_u", self.decay_u),
            ("decay_v", self.decay_v),
            ("decay_w", self.decay_w),
            ("production", self.production),
        ]
    }

    pub fn max_decay(&self) -> f64 {
        self.decay_u.max(self.decay_v).max(self.decay_w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Params {
    pub alpha: f64,
    pub kappa: f64,
    pub coeffs: Coefficients,
}

impl Params {
    pub fn new(alpha: f64, kappa: f64) -> Result<Self, ModelError> {
        Self::with_coefficients(alpha, kappa, Coefficients::default())
    }

    pub fn with_coefficients(
        alpha: f64,
        kappa: f64,
        coeffs: Coefficients,
    ) -> Result<Self, ModelError> {
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(ModelError::InvalidParameter {
                name: "alpha",
                value: alpha,
                constraint: "finite and >= 0",
            });
        }
        if !(kappa.is_finite() && kappa >= 0.0) {
            return Err(ModelError::InvalidParameter {
                name: "kappa",
                value: kappa,
                constraint: "finite and >= 0",
            });
        }
        for (name, value) in coeffs.named() {
            if !(value.is_finite() && value > 0.0) {
                return Err(ModelError::InvalidParameter {
                    name,
                    value,
                    constraint: "finite and > 0",
                });
            }
        }
        Ok(Self {
            alpha,
            kappa,
            coeffs,
        })
    }
}

/// Saturated sensitivity `u / (1+u)^alpha`.
pub fn chemotactic_sensitivity(u: f64, alpha: f64) -> Result<f64, ModelError> {
    if u < 0.0 || u.is_nan() {
        return Err(ModelError::NegativeConcentration(u));
    }
    Ok(sensitivity(u, alpha))
}

/// Unchecked form used inside stencil loops, where the caller has already
/// verified nonnegativity of the whole field.
#[inline]
pub(crate) fn sensitivity(u: f64, alpha: f64) -> f64 {
    if u == 0.0 {
        0.0
    } else if alpha == 1.0 {
        u / (1.0 + u)
    } else {
        u / (1.0 + u).powf(alpha)
    }
}

/// Pointwise kinetics `(du/dt, dv/dt, dw/dt)` without transport terms.
pub fn reaction_rates(u: f64, v: f64, w: f64, params: &Params) -> (f64, f64, f64) {
    let c = &params.coeffs;
    let infection = u * w;
    (
        -infection + params.kappa - c.decay_u * u,
        infection - c.decay_v * v,
        c.production * v - c.decay_w * w,
    )
}

fn ratio(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// Critical sensitivity exponent for spatial dimension `n`; global
/// boundedness holds for every `alpha` strictly above it.
///
/// `1/2 + n²/(6n+4)` for `n <= 4`, `n/4` for `n >= 5`.
pub fn alpha_threshold(n: u32) -> Result<BigRational, ModelError> {
    if n < 1 {
        return Err(ModelError::InvalidDimension(n));
    }
    let n = i64::from(n);
    Ok(if n <= 4 {
        ratio(1, 2) + ratio(n * n, 6 * n + 4)
    } else {
        ratio(n, 4)
    })
}

fn exact_alpha(alpha: f64) -> Result<BigRational, ModelError> {
    if alpha < 0.0 {
        return Err(ModelError::InvalidParameter {
            name: "alpha",
            value: alpha,
            constraint: ">= 0",
        });
    }
    BigRational::from_float(alpha).ok_or(ModelError::InvalidParameter {
        name: "alpha",
        value: alpha,
        constraint: "finite",
    })
}

/// Exact comparison of the binary value of `alpha` against [`alpha_threshold`].
/// An `alpha` equal to the threshold is not above it.
pub fn alpha_above_threshold(alpha: f64, n: u32) -> Result<bool, ModelError> {
    Ok(exact_alpha(alpha)? > alpha_threshold(n)?)
}

/// An exponent `p` for the `∫u^p` part of the quasi-energy, together with
/// the interval `(lower_bound, upper_bound]` it was drawn from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyExponent {
    pub p: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
}

/// Largest of the strict lower bounds an admissible `p` must exceed:
/// `max{1 + n²/(3n+2), n/2, (1-alpha)₊ n/2, (1+(1-alpha)₊)/(1+1/n)}`.
pub fn exponent_lower_bound(alpha: f64, n: u32) -> Result<BigRational, ModelError> {
    if n < 1 {
        return Err(ModelError::InvalidDimension(n));
    }
    let a = exact_alpha(alpha)?;
    let n_i = i64::from(n);
    let nr = BigRational::from_integer(BigInt::from(n_i));
    let deficit = {
        let d = BigRational::one() - &a;
        if d.is_positive() {
            d
        } else {
            BigRational::zero()
        }
    };
    let candidates = [
        BigRational::one() + ratio(n_i * n_i, 3 * n_i + 2),
        ratio(n_i, 2),
        &deficit * &nr / ratio(2, 1),
        (BigRational::one() + &deficit) * &nr / (&nr + BigRational::one()),
    ];
    Ok(candidates.into_iter().max().expect("nonempty"))
}

/// Midpoint of the admissible interval `(L, 2 alpha]`; fails when it is empty.
pub fn select_energy_exponent(alpha: f64, n: u32) -> Result<EnergyExponent, ModelError> {
    let lower = exponent_lower_bound(alpha, n)?;
    let two_alpha = exact_alpha(alpha)? * ratio(2, 1);
    let lower_f = lower.to_f64().unwrap_or(f64::INFINITY);
    if two_alpha <= lower {
        return Err(ModelError::InfeasibleExponent {
            lower_bound: lower_f,
            two_alpha: 2.0 * alpha,
        });
    }
    let mid = (&lower + &two_alpha) / ratio(2, 1);
    Ok(EnergyExponent {
        p: mid.to_f64().expect("finite midpoint"),
        lower_bound: lower_f,
        upper_bound: 2.0 * alpha,
    })
}

/// Spatially homogeneous equilibria: `(kappa, 0, 0)` always, and the
/// endemic state `(1, kappa-1, kappa-1)` once `kappa >= 1` (they coincide at `kappa = 1`).
/// Assumes unit coefficients.
pub fn homogeneous_steady_states(kappa: f64) -> Vec<(f64, f64, f64)> {
    let mut states = vec![(kappa, 0.0, 0.0)];
    if kappa > 1.0 {
        states.push((1.0, kappa - 1.0, kappa - 1.0));
    }
    states
}
