//! Scalar special functions: modified Bessel I₀/I₁, first-order Marcum Q,
//! the exponential integral E₁, the half-order Laguerre function and
//! harmonic numbers.

use thiserror::Error;

use crate::quadrature::{integrate, Tolerance};

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpecFunError {
    #[error("{function}: argument {arg} is outside the domain")]
    Domain { function: &'static str, arg: f64 },
    #[error("{function}: evaluation failed to converge")]
    NoConvergence { function: &'static str },
}

fn domain(function: &'static str, arg: f64) -> SpecFunError {
    SpecFunError::Domain { function, arg }
}

fn require_finite(function: &'static str, x: f64) -> Result<(), SpecFunError> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(domain(function, x))
    }
}

/// Switch-over point from the power series to the asymptotic expansion.
const SERIES_LIMIT: f64 = 30.0;

fn i0_series(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let (mut term, mut sum, mut k) = (1.0, 1.0, 0.0);
    while term > 1e-17 * sum {
        k += 1.0;
        term *= q / (k * k);
        sum += term;
    }
    sum
}

fn i1_series(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let (mut term, mut sum, mut k) = (0.5 * x, 0.5 * x, 0.0);
    while term.abs() > 1e-17 * sum.abs() {
        k += 1.0;
        term *= q / (k * (k + 1.0));
        sum += term;
    }
    sum
}

/// Large-argument expansion of `e^{-x} I_ν(x)` for `x ≥ SERIES_LIMIT`.
fn ie_asymptotic(nu: f64, x: f64) -> f64 {
    let mu = 4.0 * nu * nu;
    let (mut term, mut sum) = (1.0f64, 1.0f64);
    for k in 1..200 {
        let kf = k as f64;
        let next = term * ((2.0 * kf - 1.0).powi(2) - mu) / (8.0 * kf * x);
        if next.abs() >= term.abs() {
            break;
        }
        term = next;
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    sum / (2.0 * std::f64::consts::PI * x).sqrt()
}

fn i0e_unchecked(x: f64) -> f64 {
    let ax = x.abs();
    if ax < SERIES_LIMIT {
        i0_series(ax) * (-ax).exp()
    } else {
        ie_asymptotic(0.0, ax)
    }
}

fn i1e_unchecked(x: f64) -> f64 {
    let ax = x.abs();
    let v = if ax < SERIES_LIMIT {
        i1_series(ax) * (-ax).exp()
    } else {
        ie_asymptotic(1.0, ax)
    };
    v.copysign(x)
}

/// Modified Bessel function of the first kind, order zero.
pub fn bessel_i0(x: f64) -> Result<f64, SpecFunError> {
    require_finite("bessel_i0", x)?;
    let ax = x.abs();
    Ok(if ax < SERIES_LIMIT {
        i0_series(ax)
    } else {
        ie_asymptotic(0.0, ax) * ax.exp()
    })
}

/// Modified Bessel function of the first kind, order one.
pub fn bessel_i1(x: f64) -> Result<f64, SpecFunError> {
    require_finite("bessel_i1", x)?;
    let ax = x.abs();
    let v = if ax < SERIES_LIMIT {
        i1_series(ax)
    } else {
        ie_asymptotic(1.0, ax) * ax.exp()
    };
    Ok(v.copysign(x))
}

/// Exponentially scaled `e^{-|x|} I₀(x)`, finite for every finite `x`.
pub fn bessel_i0e(x: f64) -> Result<f64, SpecFunError> {
    require_finite("bessel_i0e", x)?;
    Ok(i0e_unchecked(x))
}

/// Exponentially scaled `e^{-|x|} I₁(x)`.
pub fn bessel_i1e(x: f64) -> Result<f64, SpecFunError> {
    require_finite("bessel_i1e", x)?;
    Ok(i1e_unchecked(x))
}

/// `e^{-x} I_k(x)` for `k = 0..=n` and `x > 0`, by Miller's backward
/// recurrence normalised against the directly computed `k = 0` value.
fn scaled_bessel_sequence(x: f64, n: usize) -> Vec<f64> {
    let start = n + 10 + (40.0 * x).sqrt().ceil() as usize;
    let mut out = vec![0.0; n + 1];
    let (mut above, mut here) = (0.0f64, 1e-280f64);
    for k in (1..=start).rev() {
        let below = above + (2.0 * k as f64 / x) * here;
        above = here;
        here = below;
        if k - 1 <= n {
            out[k - 1] = here;
        }
        if k <= n {
            out[k] = above;
        }
        if here > 1e250 {
            above *= 1e-250;
            here *= 1e-250;
            out.iter_mut().for_each(|v| *v *= 1e-250);
        }
    }
    let scale = i0e_unchecked(x) / out[0];
    out.iter_mut().for_each(|v| *v *= scale);
    out
}

/// `Σ_{k ≥ first} r^k e^{-x} I_k(x)` for `0 ≤ r ≤ 1`.
fn weighted_bessel_sum(r: f64, x: f64, first: usize) -> Result<f64, SpecFunError> {
    let by_ratio = if r < 1.0 {
        40.0 / -r.ln()
    } else {
        f64::INFINITY
    };
    let by_spread = (80.0 * x).sqrt() + 10.0;
    let mut n = (by_ratio.min(by_spread).ceil() as usize).clamp(16, 1 << 20) + 8;
    loop {
        let seq = scaled_bessel_sequence(x, n);
        let mut sum = 0.0;
        let mut weight = r.powi(first as i32);
        let mut last = 0.0;
        for v in &seq[first..] {
            last = weight * v;
            sum += last;
            weight *= r;
        }
        if last <= 1e-17 * sum.max(f64::MIN_POSITIVE) || last == 0.0 {
            return Ok(sum);
        }
        if n > 1 << 20 {
            return Err(SpecFunError::NoConvergence {
                function: "marcum_q1",
            });
        }
        n *= 2;
    }
}

/// Beyond this value of `ab` the defining integral is used directly.
const MARCUM_SERIES_LIMIT: f64 = 1e4;

/// Returns `(Q₁(a,b), 1 − Q₁(a,b))`, each computed without cancellation
/// where that matters.
fn marcum_pair(a: f64, b: f64) -> Result<(f64, f64), SpecFunError> {
    if b == 0.0 {
        return Ok((1.0, 0.0));
    }
    if a == 0.0 {
        let h = 0.5 * b * b;
        return Ok(((-h).exp(), -(-h).exp_m1()));
    }
    let x = a * b;
    let envelope = (-0.5 * (a - b) * (a - b)).exp();
    if x > MARCUM_SERIES_LIMIT {
        return marcum_by_quadrature(a, b);
    }
    if a < b {
        let q = (envelope * weighted_bessel_sum(a / b, x, 0)?).clamp(0.0, 1.0);
        Ok((q, 1.0 - q))
    } else {
        let p = (envelope * weighted_bessel_sum(b / a, x, 1)?).clamp(0.0, 1.0);
        Ok((1.0 - p, p))
    }
}

fn marcum_by_quadrature(a: f64, b: f64) -> Result<(f64, f64), SpecFunError> {
    let density = |t: f64| t * (-0.5 * (t - a) * (t - a)).exp() * i0e_unchecked(a * t);
    let tol = Tolerance::new(1e-14, 1e-12);
    let fail = |_| SpecFunError::NoConvergence {
        function: "marcum_q1",
    };
    if b >= a {
        let hi = b + 40.0;
        let q = integrate(density, b, hi, tol)
            .map_err(fail)?
            .value
            .clamp(0.0, 1.0);
        Ok((q, 1.0 - q))
    } else {
        let lo = (a - 40.0).max(0.0).min(b);
        let p = integrate(density, lo, b, tol)
            .map_err(fail)?
            .value
            .clamp(0.0, 1.0);
        Ok((1.0 - p, p))
    }
}

fn check_marcum_args(a: f64, b: f64) -> Result<(), SpecFunError> {
    for v in [a, b] {
        if !v.is_finite() || v < 0.0 {
            return Err(domain("marcum_q1", v));
        }
    }
    Ok(())
}

/// First-order Marcum Q function `Q₁(a, b)` for `a, b ≥ 0`.
pub fn marcum_q1(a: f64, b: f64) -> Result<f64, SpecFunError> {
    check_marcum_args(a, b)?;
    Ok(marcum_pair(a, b)?.0)
}

/// `1 − Q₁(a, b)`, accurate when `Q₁` is close to one.
pub fn marcum_q1_complement(a: f64, b: f64) -> Result<f64, SpecFunError> {
    check_marcum_args(a, b)?;
    Ok(marcum_pair(a, b)?.1)
}

/// Exponential integral `E₁(x) = ∫ₓ^∞ e^{-t}/t dt` for `x > 0`.
pub fn exp_integral_e1(x: f64) -> Result<f64, SpecFunError> {
    if !(x > 0.0) || x.is_infinite() {
        return if x == f64::INFINITY {
            Ok(0.0)
        } else {
            Err(domain("exp_integral_e1", x))
        };
    }
    if x <= 1.0 {
        let (mut term, mut sum) = (1.0f64, 0.0f64);
        for k in 1..100 {
            let kf = k as f64;
            term *= -x / kf;
            let add = -term / kf;
            sum += add;
            if add.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        return Ok(-EULER_GAMMA - x.ln() + sum);
    }
    // Modified Lentz evaluation of the continued fraction.
    let tiny = 1e-300;
    let mut b = x + 1.0;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..1000 {
        let an = -((i * i) as f64);
        b += 2.0;
        d = 1.0 / (an * d + b);
        c = b + an / c;
        let delta = c * d;
        h *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            return Ok(h * (-x).exp());
        }
    }
    Err(SpecFunError::NoConvergence {
        function: "exp_integral_e1",
    })
}

/// Half-order Laguerre function `L_{1/2}(x)` for `x ≤ 0`.
pub fn laguerre_half(x: f64) -> Result<f64, SpecFunError> {
    if !x.is_finite() || x > 0.0 {
        return Err(domain("laguerre_half", x));
    }
    let y = -0.5 * x;
    Ok((1.0 - x) * i0e_unchecked(y) - x * i1e_unchecked(y))
}

/// Harmonic number `H_N = Σ_{k=1}^{N} 1/k`.
pub fn harmonic(n: u64) -> Result<f64, SpecFunError> {
    if n == 0 {
        return Err(domain("harmonic", 0.0));
    }
    Ok((1..=n).rev().map(|k| 1.0 / k as f64).sum())
}
