//! Scalar bound algebra for OT, coin flipping and forcing OT.

use num_complex::Complex64;
use serde::Serialize;
use std::f64::consts::SQRT_2;

use crate::{Error, Result};

/// Slack allowed at the edges of a closed domain before reporting a violation.
const EDGE: f64 = 1e-12;

/// Below this argument `f` switches from the closed form to bisection.
pub const F_CLOSED_FORM_FLOOR: f64 = 1e-6;

/// Absolute width at which the bisection oracles stop.
pub const BISECTION_TOL: f64 = 1e-12;

/// Tolerance of the Kitaev product check.
pub const KITAEV_TOL: f64 = 1e-9;

fn in_domain(x: f64, lo: f64, hi: f64, domain: &'static str) -> Result<f64> {
    if !x.is_finite() || x < lo - EDGE || x > hi + EDGE {
        return Err(Error::Domain { value: x, domain });
    }
    Ok(x.clamp(lo, hi))
}

/// Bisection for the root of an increasing function on `[lo, hi]`.
pub fn bisect_increasing(mut lo: f64, mut hi: f64, h: impl Fn(f64) -> f64) -> f64 {
    while hi - lo > BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        if h(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `g(x) = x (2x - 1)^2` on `[1/2, 1]`.
pub fn g(x: f64) -> Result<f64> {
    let x = in_domain(x, 0.5, 1.0, "[1/2, 1]")?;
    Ok(g_unchecked(x))
}

fn g_unchecked(x: f64) -> f64 {
    x * (2.0 * x - 1.0).powi(2)
}

/// Inverse of `g`, mapping `[0, 1]` onto `[1/2, 1]`.
///
/// Uses the cube-root closed form. For `z < 2/27` the inner square root is
/// imaginary and the cube-root argument lies on the unit circle, so the sum
/// of the two cube roots is real.
pub fn f(z: f64) -> Result<f64> {
    let z = in_domain(z, 0.0, 1.0, "[0, 1]")?;
    if z < F_CLOSED_FORM_FLOOR {
        return f_bisection(z);
    }
    let disc = Complex64::new(27.0 * z * z - 2.0 * z, 0.0).sqrt();
    let w = disc * (3.0 * 3f64.sqrt()) + (27.0 * z - 1.0);
    let root = w.powf(1.0 / 3.0);
    let value = (root + root.inv()) / 6.0 + 1.0 / 3.0;
    Ok(value.re.clamp(0.5, 1.0))
}

/// Inverse of `g` by bisection.
pub fn f_bisection(z: f64) -> Result<f64> {
    let z = in_domain(z, 0.0, 1.0, "[0, 1]")?;
    Ok(bisect_increasing(0.5, 1.0, |x| g_unchecked(x) - z))
}

/// Lower bound on the bias of any quantum OT protocol, in closed form.
pub fn ot_lower_bound_epsilon() -> f64 {
    0.5 * ((0.5 + 2.0 * SQRT_2).sqrt() - 0.5f64.sqrt()) - 0.5
}

/// Root of `x f(x) = 1/2` on `[1/2, 1]`, minus `1/2`.
pub fn ot_lower_bound_epsilon_bisection() -> f64 {
    bisect_increasing(0.5, 1.0, |x| {
        x * f_bisection(x).expect("x lies in [1/2, 1]") - 0.5
    }) - 0.5
}

/// Closed form and bisection value of the OT bias bound side by side.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EpsilonReport {
    pub closed_form: f64,
    pub bisection: f64,
    pub difference: f64,
}

pub fn epsilon_report() -> EpsilonReport {
    let closed_form = ot_lower_bound_epsilon();
    let bisection = ot_lower_bound_epsilon_bisection();
    EpsilonReport {
        closed_form,
        bisection,
        difference: (closed_form - bisection).abs(),
    }
}

/// Upper bound on Bob's CF cheating probability in the CF-from-OT construction.
pub fn bcf_upper_from_bot(b_ot: f64) -> Result<f64> {
    f(b_ot)
}

/// Outcome of a product inequality `a * b >= floor`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProductCheck {
    pub product: f64,
    pub floor: f64,
    pub margin: f64,
    pub pass: bool,
}

/// Checks `a * b >= floor - tol`.
pub fn product_check(a: f64, b: f64, floor: f64, tol: f64) -> ProductCheck {
    let product = a * b;
    let margin = product - floor;
    ProductCheck {
        product,
        floor,
        margin,
        pass: margin >= -tol,
    }
}

/// Kitaev's coin-flipping bound `A * B >= 1/2`.
pub fn kitaev_product_check(a: f64, b: f64) -> ProductCheck {
    product_check(a, b, 0.5, KITAEV_TOL)
}

/// Binomial coefficient `C(n, k)`.
pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc * (n - i) as u64 / (i + 1) as u64)
}

fn check_nk(n: usize, k: usize) -> Result<()> {
    if k == 0 || k > n {
        return Err(Error::Domain {
            value: k as f64,
            domain: "1 <= k <= n",
        });
    }
    if n > 60 {
        return Err(Error::Domain {
            value: n as f64,
            domain: "n <= 60",
        });
    }
    Ok(())
}

/// Honest joint outcome probability and the minimum forcing bias for fOT(n, k).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FotLower {
    pub honest_joint: f64,
    pub min_forcing_bias: f64,
}

pub fn fot_lower(n: usize, k: usize) -> Result<FotLower> {
    check_nk(n, k)?;
    Ok(FotLower {
        honest_joint: 1.0 / (binomial(n, k) as f64 * 2f64.powi(n as i32)),
        min_forcing_bias: SQRT_2.powi(k as i32),
    })
}

/// Cheating bounds achieved by the composed fOT protocol with CF bias parameter `gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FotUpper {
    pub a_bound: f64,
    pub b_bound: f64,
    pub required_delta: f64,
}

pub fn fot_upper(n: usize, k: usize, gamma: f64) -> Result<FotUpper> {
    check_nk(n, k)?;
    if !gamma.is_finite() || gamma <= 0.0 {
        return Err(Error::Domain {
            value: gamma,
            domain: "gamma > 0",
        });
    }
    let scale = SQRT_2.powi(k as i32) * (1.0 + gamma);
    Ok(FotUpper {
        a_bound: scale / (binomial(n, k) as f64 * 2f64.powi(k as i32)),
        b_bound: scale / 2f64.powi(n as i32),
        required_delta: required_delta(k, gamma),
    })
}

/// Largest `delta` with `(1/sqrt2 + delta/2)^k <= sqrt2^k (1 + gamma) / 2^k`, by bisection.
pub fn required_delta(k: usize, gamma: f64) -> f64 {
    let k = k as i32;
    let rhs = SQRT_2.powi(k) * (1.0 + gamma) / 2f64.powi(k);
    let lhs = |d: f64| (1.0 / SQRT_2 + d / 2.0).powi(k);
    let mut hi = 1.0;
    while lhs(hi) <= rhs {
        hi *= 2.0;
    }
    bisect_increasing(0.0, hi, |d| lhs(d) - rhs)
}

/// Bound quantities for one parameter set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundSet {
    pub a_ot: Option<f64>,
    pub b_ot: Option<f64>,
    pub a_cf: Option<f64>,
    pub b_cf: Option<f64>,
    pub epsilon: f64,
    pub n: usize,
    pub k: usize,
    pub gamma: f64,
    pub delta: f64,
}

impl BoundSet {
    pub fn new(n: usize, k: usize, gamma: f64) -> Result<Self> {
        let upper = fot_upper(n, k, gamma)?;
        Ok(BoundSet {
            a_ot: None,
            b_ot: None,
            a_cf: None,
            b_cf: None,
            epsilon: ot_lower_bound_epsilon(),
            n,
            k,
            gamma,
            delta: upper.required_delta,
        })
    }

    /// Fills in the OT cheating probabilities and the CF values they imply:
    /// `A_CF = A_OT` and `B_CF <= f(B_OT)`.
    pub fn with_ot(mut self, a_ot: f64, b_ot: f64) -> Result<Self> {
        let a_ot = in_domain(a_ot, 0.5, 1.0, "[1/2, 1]")?;
        let b_ot = in_domain(b_ot, 0.5, 1.0, "[1/2, 1]")?;
        self.a_ot = Some(a_ot);
        self.b_ot = Some(b_ot);
        self.a_cf = Some(a_ot);
        self.b_cf = Some(bcf_upper_from_bot(b_ot)?);
        Ok(self)
    }
}
