//! Interference-constrained power allocation and ergodic capacity.
//!
//! The SU transmits with power `P(γ_s, γ_sp, γ_ps)` chosen to maximise
//! `E log₂(1 + γ_s P / (γ_ps γ̄_p + 1))` subject to `E{γ_sp P} ≤ Q_av` and
//! `γ_sp P ≤ Q_p`. The optimum is water-filling with a level that varies
//! with the SU→PU channel, clipped by the peak cap:
//!
//! ```text
//! z = γ_s/γ_sp,  c = 1 + γ_ps γ̄_p,  W = 1/(λ ln 2)
//! P = 0                     if z ≤ c/W
//! P = W/γ_sp − c/γ_s        if c/W ≤ z ≤ c/(W − Q_p)
//! P = Q_p/γ_sp              otherwise
//! ```

use std::f64::consts::LN_2;

use thiserror::Error;

use crate::channels::{ChannelTriple, TripleSampler};
use crate::par::{self, Merge};
use crate::quadrature::{integrate, integrate_to_inf, QuadError, Tolerance};
use crate::rng::domain;
use crate::specfun::{self, SpecFunError, EULER_GAMMA};
use crate::stats::RunningStats;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PowerError {
    #[error("invalid {field}: {detail}")]
    Invalid { field: &'static str, detail: String },
    #[error(
        "average constraint {target} unreachable: largest achievable interference is {achievable}"
    )]
    Unreachable { target: f64, achievable: f64 },
    #[error("quadrature failed: {0}")]
    Quadrature(#[from] QuadError),
    #[error(transparent)]
    SpecFun(#[from] SpecFunError),
}

fn invalid(field: &'static str, detail: impl ToString) -> PowerError {
    PowerError::Invalid {
        field,
        detail: detail.to_string(),
    }
}

/// Floor applied to `γ_sp` before dividing by it.
pub const GAMMA_SP_FLOOR: f64 = 1e-12;

/// Relative rounding allowance for the peak check.
pub const PEAK_ROUNDING_SLACK: f64 = 4.0 * f64::EPSILON;

/// Minimum calibration set size.
pub const MIN_CALIBRATION_RUNS: usize = 10_000;

/// Bisection range for λ.
pub const LAMBDA_RANGE: (f64, f64) = (1e-9, 1e9);

/// Average and peak caps on interference at the primary receiver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterferenceConstraints {
    q_av: f64,
    q_p: f64,
}

impl InterferenceConstraints {
    /// `q_p` may be `f64::INFINITY` (average constraint only).
    pub fn new(q_av: f64, q_p: f64) -> Result<Self, PowerError> {
        if !(q_av > 0.0) || !q_av.is_finite() {
            return Err(invalid("q_av", q_av));
        }
        if q_p.is_nan() || q_p < q_av {
            return Err(invalid("q_p", format!("{q_p} is below q_av = {q_av}")));
        }
        Ok(Self { q_av, q_p })
    }

    /// `Q_p = ρ·Q_av`.
    pub fn from_rho(q_av: f64, rho: f64) -> Result<Self, PowerError> {
        if rho.is_nan() || rho < 1.0 {
            return Err(invalid("rho", format!("{rho} is below 1")));
        }
        Self::new(q_av, q_av * rho)
    }

    pub fn q_av(&self) -> f64 {
        self.q_av
    }

    pub fn q_p(&self) -> f64 {
        self.q_p
    }

    pub fn rho(&self) -> f64 {
        self.q_p / self.q_av
    }
}

/// A calibrated allocation rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerPolicy {
    pub lambda: f64,
    pub constraints: InterferenceConstraints,
    pub pu_tx_power: f64,
    /// Hard cap on transmit power; only binds when `γ_sp` is near zero.
    pub max_tx_power: f64,
}

impl PowerPolicy {
    pub fn new(
        lambda: f64,
        constraints: InterferenceConstraints,
        pu_tx_power: f64,
    ) -> Result<Self, PowerError> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(invalid("lambda", lambda));
        }
        Ok(Self {
            lambda,
            constraints,
            pu_tx_power,
            max_tx_power: f64::INFINITY,
        })
    }

    /// Water level `1/(λ ln 2)`.
    pub fn water_level(&self) -> f64 {
        1.0 / (self.lambda * LN_2)
    }
}

/// Optimal transmit power for one channel state.
pub fn allocate_power(g: &ChannelTriple, policy: &PowerPolicy) -> f64 {
    if !(g.gamma_s > 0.0) {
        return 0.0;
    }
    let gsp = g.gamma_sp.max(GAMMA_SP_FLOOR);
    let c = 1.0 + g.gamma_ps * policy.pu_tx_power;
    let water = (policy.water_level() / gsp - c / g.gamma_s).max(0.0);
    water
        .min(policy.constraints.q_p() / gsp)
        .min(policy.max_tx_power)
}

/// Instantaneous rate `log₂(1 + γ_s P/(γ_ps γ̄_p + 1))` in bps/Hz.
pub fn instantaneous_rate(g: &ChannelTriple, power: f64, pu_tx_power: f64) -> f64 {
    (g.gamma_s * power / (g.gamma_ps * pu_tx_power + 1.0)).ln_1p() / LN_2
}

fn mean_interference(samples: &[ChannelTriple], policy: &PowerPolicy) -> f64 {
    let total: f64 = par::reduce_slice(
        samples,
        || 0.0,
        |g, acc: &mut f64| {
            *acc += g.gamma_sp.max(GAMMA_SP_FLOOR) * allocate_power(g, policy);
        },
    );
    total / samples.len() as f64
}

/// Calibrates λ so that the average interference over a frozen set of
/// `runs` channel draws (calibration substreams of `seed`) equals `Q_av`.
pub fn solve_lambda<S: TripleSampler + ?Sized>(
    sampler: &S,
    constraints: InterferenceConstraints,
    runs: usize,
    seed: u64,
) -> Result<PowerPolicy, PowerError> {
    if runs < MIN_CALIBRATION_RUNS {
        return Err(invalid(
            "runs",
            format!("{runs} is below {MIN_CALIBRATION_RUNS}"),
        ));
    }
    let samples = par::generate(runs, seed, domain::CALIBRATION, |r| {
        sampler.sample_triple(r)
    });
    let policy_at = |lambda: f64| PowerPolicy::new(lambda, constraints, sampler.pu_tx_power());
    let target = constraints.q_av();

    let (mut lo, mut hi) = (LAMBDA_RANGE.0.ln(), LAMBDA_RANGE.1.ln());
    let achievable = mean_interference(&samples, &policy_at(lo.exp())?);
    if achievable < target {
        return Err(PowerError::Unreachable { target, achievable });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let value = mean_interference(&samples, &policy_at(mid.exp())?);
        if (value - target).abs() <= 1e-10 * target {
            return policy_at(mid.exp());
        }
        if value > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    policy_at((0.5 * (lo + hi)).exp())
}

/// Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub std_err: f64,
    pub runs: usize,
}

impl From<RunningStats> for Estimate {
    fn from(s: RunningStats) -> Self {
        Self {
            mean: s.mean(),
            std_err: s.std_err(),
            runs: s.count() as usize,
        }
    }
}

/// Ergodic capacity over `runs` fresh draws (evaluation substreams).
pub fn ergodic_capacity_mc<S: TripleSampler + ?Sized>(
    sampler: &S,
    policy: &PowerPolicy,
    runs: usize,
    seed: u64,
) -> Estimate {
    let stats: RunningStats = par::reduce_chunks(
        runs,
        seed,
        domain::EVALUATION,
        RunningStats::new,
        |rng, range, acc| {
            for _ in range {
                let g = sampler.sample_triple(rng);
                acc.push(instantaneous_rate(
                    &g,
                    allocate_power(&g, policy),
                    policy.pu_tx_power,
                ));
            }
        },
    );
    stats.into()
}

/// Interference statistics of a policy on held-out draws.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterferenceCheck {
    pub average: Estimate,
    /// Largest `γ_sp P` seen.
    pub peak: f64,
    /// Draws with `γ_sp P > Q_p`.
    pub violations: u64,
}

#[derive(Default)]
struct PeakAcc {
    stats: RunningStats,
    peak: f64,
    violations: u64,
}

impl Merge for PeakAcc {
    fn merge(&mut self, other: Self) {
        self.stats.merge(other.stats);
        self.peak = self.peak.max(other.peak);
        self.violations += other.violations;
    }
}

/// Measures `E{γ_sp P}` and peak compliance on the evaluation substreams.
///
/// A draw counts as a violation when `γ_sp P` exceeds `Q_p` by more than
/// [`PEAK_ROUNDING_SLACK`] relative, since `γ_sp · (Q_p/γ_sp)` may round one
/// or two ulps above `Q_p`.
pub fn interference_check<S: TripleSampler + ?Sized>(
    sampler: &S,
    policy: &PowerPolicy,
    runs: usize,
    seed: u64,
) -> InterferenceCheck {
    let q_p = policy.constraints.q_p();
    let acc: PeakAcc = par::reduce_chunks(
        runs,
        seed,
        domain::EVALUATION,
        PeakAcc::default,
        |rng, range, acc| {
            for _ in range {
                let g = sampler.sample_triple(rng);
                let i = g.gamma_sp.max(GAMMA_SP_FLOOR) * allocate_power(&g, policy);
                acc.stats.push(i);
                acc.peak = acc.peak.max(i);
                if i > q_p * (1.0 + PEAK_ROUNDING_SLACK) {
                    acc.violations += 1;
                }
            }
        },
    );
    InterferenceCheck {
        average: acc.stats.into(),
        peak: acc.peak,
        violations: acc.violations,
    }
}

/// A one-dimensional law used by the semi-analytic capacity.
#[derive(Clone, Copy)]
pub enum Density<'a> {
    PointMass(f64),
    Pdf(&'a (dyn Fn(f64) -> f64 + Sync)),
}

/// Capacity from the double integral over `γ_ps` and `z = γ_s/γ_sp`.
pub fn capacity_semianalytic(
    f_z: Density<'_>,
    f_gps: Density<'_>,
    policy: &PowerPolicy,
    quadrature_tol: f64,
) -> Result<f64, PowerError> {
    let w = policy.water_level();
    let q_p = policy.constraints.q_p();
    let tol = Tolerance::new(quadrature_tol, 0.0);
    let inner = |gps: f64| -> Result<f64, PowerError> {
        let c = 1.0 + gps * policy.pu_tx_power;
        let z0 = c / w;
        let z1 = if w > q_p {
            c / (w - q_p)
        } else {
            f64::INFINITY
        };
        let rate = |z: f64| {
            if z <= z0 {
                0.0
            } else if z <= z1 {
                (z / z0).log2()
            } else {
                (q_p * z / c).ln_1p() / LN_2
            }
        };
        match f_z {
            Density::PointMass(z) => Ok(rate(z)),
            Density::Pdf(f) => {
                let fill = if z1.is_finite() {
                    integrate(|z| rate(z) * f(z), z0, z1, tol)?.value
                        + integrate_to_inf(|z| rate(z) * f(z), z1, tol)?.value
                } else {
                    integrate_to_inf(|z| rate(z) * f(z), z0, tol)?.value
                };
                Ok(fill)
            }
        }
    };
    match f_gps {
        Density::PointMass(g) => inner(g),
        Density::Pdf(f) => {
            let failure = std::cell::RefCell::new(None);
            let value = integrate_to_inf(
                |g| {
                    let p = f(g);
                    if p == 0.0 {
                        return 0.0;
                    }
                    match inner(g) {
                        Ok(v) => v * p,
                        Err(e) => {
                            failure.borrow_mut().get_or_insert(e);
                            f64::NAN
                        }
                    }
                },
                0.0,
                tol,
            );
            match (value, failure.into_inner()) {
                (_, Some(e)) => Err(e),
                (v, None) => Ok(v?.value),
            }
        }
    }
}

/// Average SNRs shared by the closed forms below.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AverageSnrs {
    pub gbar_s: f64,
    pub gbar_sp: f64,
    pub gbar_ps: f64,
    pub gbar_p: f64,
}

impl AverageSnrs {
    fn interference_plus_noise(&self) -> f64 {
        1.0 + self.gbar_p * self.gbar_ps
    }
}

/// Capacity when every link is deterministic.
pub fn awgn_capacity(q_av: f64, snr: &AverageSnrs) -> f64 {
    (q_av * snr.gbar_s / (snr.gbar_sp * snr.interference_plus_noise())).ln_1p() / LN_2
}

/// Multiplier that meets `Q_av` with equality on deterministic links.
pub fn lambda_awgn(q_av: f64, snr: &AverageSnrs) -> f64 {
    let level = q_av + snr.interference_plus_noise() * snr.gbar_sp / snr.gbar_s;
    1.0 / (level * LN_2)
}

/// Rician-interference / Rayleigh-SU capacity with unlimited peak cap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lemma1 {
    /// `s = λ ln 2 (γ̄_ps γ̄_p + 1) γ̄_sp/γ̄_s`.
    pub s: f64,
    /// `E₁(s)/ln 2`.
    pub exact: f64,
    /// `log₂(1/s_AWGN) − γ/ln 2`, the large-`γ̄_s` bound.
    pub high_snr_bound: f64,
    /// `e^{−s_AWGN}/(s_AWGN ln 2)`, the small-`γ̄_s` bound.
    pub low_snr_bound: f64,
}

/// Exact capacity and its asymptotic bounds, for interference links that
/// are effectively deterministic and an exponential SU→SU power.
pub fn lemma1_asymptotics(policy: &PowerPolicy, snr: &AverageSnrs) -> Result<Lemma1, PowerError> {
    if policy.constraints.q_p().is_finite() {
        return Err(invalid(
            "q_p",
            "the closed form needs an unlimited peak cap",
        ));
    }
    let scale = snr.interference_plus_noise() * snr.gbar_sp / snr.gbar_s * LN_2;
    let s = policy.lambda * scale;
    let s_awgn = lambda_awgn(policy.constraints.q_av(), snr) * scale;
    Ok(Lemma1 {
        s,
        exact: specfun::exp_integral_e1(s)? / LN_2,
        high_snr_bound: -s_awgn.log2() - EULER_GAMMA / LN_2,
        low_snr_bound: (-s_awgn).exp() / (s_awgn * LN_2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{ChannelSpec, SystemSpec};
    use proptest::prelude::*;

    fn triple(s: f64, sp: f64, ps: f64) -> ChannelTriple {
        ChannelTriple {
            gamma_s: s,
            gamma_sp: sp,
            gamma_ps: ps,
        }
    }

    fn policy_with_level(level: f64, q_p: f64) -> PowerPolicy {
        let c = InterferenceConstraints::new(1.0, q_p).unwrap();
        PowerPolicy::new(1.0 / (level * LN_2), c, 10.0).unwrap()
    }

    fn unit_snrs() -> AverageSnrs {
        AverageSnrs {
            gbar_s: 1.0,
            gbar_sp: 1.0,
            gbar_ps: 1.0,
            gbar_p: 10.0,
        }
    }

    #[test]
    fn allocation_hand_cases() {
        let p = policy_with_level(2.0, f64::INFINITY);
        assert_eq!(allocate_power(&triple(0.4, 1.0, 0.0), &p), 0.0);
        assert!((allocate_power(&triple(1.0, 1.0, 0.0), &p) - 1.0).abs() < 1e-14);
        let clipped = policy_with_level(2.0, 1.5);
        assert!((allocate_power(&triple(100.0, 1.0, 0.0), &clipped) - 1.5).abs() < 1e-14);
    }

    #[test]
    fn constraint_validation_names_field() {
        match InterferenceConstraints::new(2.0, 1.0) {
            Err(PowerError::Invalid { field, .. }) => assert_eq!(field, "q_p"),
            other => panic!("{other:?}"),
        }
        assert!(InterferenceConstraints::from_rho(1.0, 0.5).is_err());
        assert_eq!(
            InterferenceConstraints::from_rho(2.0, 1.2).unwrap().q_p(),
            2.4
        );
    }

    #[test]
    fn deterministic_links_give_constant_power() {
        let sys = SystemSpec::new(
            ChannelSpec::awgn(1.0),
            ChannelSpec::awgn(1.0),
            ChannelSpec::awgn(1.0),
            10.0,
        )
        .unwrap();
        let c = InterferenceConstraints::new(11.0, f64::INFINITY).unwrap();
        let policy = solve_lambda(&sys, c, 20_000, 1).unwrap();
        assert!((policy.lambda / lambda_awgn(11.0, &unit_snrs()) - 1.0).abs() < 1e-4);
        let p = allocate_power(&triple(1.0, 1.0, 1.0), &policy);
        assert!((p - 11.0).abs() < 1e-3);
        let cap = ergodic_capacity_mc(&sys, &policy, 20_000, 1);
        assert!((cap.mean - awgn_capacity(11.0, &unit_snrs())).abs() < 1e-3);
    }

    #[test]
    fn binding_peak_cap_is_not_a_violation() {
        let r = ChannelSpec::rayleigh(1.0);
        let sys = SystemSpec::new(r, r, r, 10.0).unwrap();
        let c = InterferenceConstraints::from_rho(1.0, 1.2).unwrap();
        let policy = solve_lambda(&sys, c, 50_000, 4).unwrap();
        let check = interference_check(&sys, &policy, 100_000, 4);
        assert_eq!(check.violations, 0);
        assert!((check.peak / c.q_p() - 1.0).abs() < 1e-12, "{}", check.peak);
    }

    #[test]
    fn calibration_meets_constraint_on_held_out_set() {
        let r = ChannelSpec::rayleigh(1.0);
        let sys = SystemSpec::new(r, r, r, 1.0).unwrap();
        let c = InterferenceConstraints::new(1.0, f64::INFINITY).unwrap();
        let policy = solve_lambda(&sys, c, 200_000, 2).unwrap();
        let check = interference_check(&sys, &policy, 200_000, 2);
        assert!(
            (check.average.mean - 1.0).abs() < 4.0 * check.average.std_err,
            "{check:?}"
        );
        assert_eq!(check.violations, 0);
    }

    #[test]
    fn calibration_rejects_small_sets() {
        let r = ChannelSpec::rayleigh(1.0);
        let sys = SystemSpec::new(r, r, r, 1.0).unwrap();
        let c = InterferenceConstraints::new(1.0, f64::INFINITY).unwrap();
        assert!(solve_lambda(&sys, c, 100, 1).is_err());
    }

    #[test]
    fn relaxing_constraints_never_hurts() {
        let r = ChannelSpec::rayleigh(1.0);
        let sys = SystemSpec::new(r, r, r, 10.0).unwrap();
        let cap = |q_av: f64, rho: f64| {
            let c = InterferenceConstraints::from_rho(q_av, rho).unwrap();
            let p = solve_lambda(&sys, c, 50_000, 3).unwrap();
            ergodic_capacity_mc(&sys, &p, 50_000, 3).mean
        };
        assert!(cap(2.0, f64::INFINITY) >= cap(1.0, f64::INFINITY));
        assert!(cap(1.0, f64::INFINITY) >= cap(1.0, 1.2));
    }

    #[test]
    fn semianalytic_point_masses_reproduce_awgn() {
        let snr = unit_snrs();
        let c = InterferenceConstraints::new(11.0, f64::INFINITY).unwrap();
        let policy = PowerPolicy::new(lambda_awgn(11.0, &snr), c, 10.0).unwrap();
        let v = capacity_semianalytic(
            Density::PointMass(1.0),
            Density::PointMass(1.0),
            &policy,
            1e-10,
        )
        .unwrap();
        assert!((v - awgn_capacity(11.0, &snr)).abs() < 1e-6);
    }

    #[test]
    fn semianalytic_large_peak_matches_unlimited() {
        let fz = |z: f64| crate::channels::ratio_pdf_z(z, 10.0, 1.0, 1.0).unwrap();
        let fg =
            |g: f64| crate::channels::rician_power_pdf(g, &ChannelSpec::rician(10.0, 1.0)).unwrap();
        let inf = InterferenceConstraints::new(1.0, f64::INFINITY).unwrap();
        let big = InterferenceConstraints::new(1.0, 1e3).unwrap();
        let lambda = 0.05;
        let a = capacity_semianalytic(
            Density::Pdf(&fz),
            Density::Pdf(&fg),
            &PowerPolicy::new(lambda, inf, 10.0).unwrap(),
            1e-9,
        )
        .unwrap();
        let b = capacity_semianalytic(
            Density::Pdf(&fz),
            Density::Pdf(&fg),
            &PowerPolicy::new(lambda, big, 10.0).unwrap(),
            1e-9,
        )
        .unwrap();
        assert!((a - b).abs() < 1e-4, "{a} vs {b}");
    }

    #[test]
    fn lemma1_reference_values() {
        let snr = unit_snrs();
        let c = InterferenceConstraints::new(1.0, f64::INFINITY).unwrap();
        // λ chosen so that s = 1.
        let policy = PowerPolicy::new(1.0 / (11.0 * LN_2), c, 10.0).unwrap();
        let l = lemma1_asymptotics(&policy, &snr).unwrap();
        assert!((l.s - 1.0).abs() < 1e-14);
        assert!((l.exact - 0.219_383_934_395_520_27 / LN_2).abs() < 1e-13);
        let tiny = PowerPolicy::new(1e-9 / (11.0 * LN_2), c, 10.0).unwrap();
        let t = lemma1_asymptotics(&tiny, &snr).unwrap();
        assert!((t.exact - (-(t.s.ln()) - EULER_GAMMA) / LN_2).abs() < 1e-8);
        let peak =
            PowerPolicy::new(1.0, InterferenceConstraints::new(1.0, 2.0).unwrap(), 10.0).unwrap();
        assert!(lemma1_asymptotics(&peak, &snr).is_err());
    }

    #[test]
    fn awgn_closed_form() {
        assert!((awgn_capacity(11.0, &unit_snrs()) - 1.0).abs() < 1e-15);
        assert!(awgn_capacity(1e-300, &unit_snrs()) < 1e-299);
    }

    proptest! {
        #[test]
        fn allocation_respects_caps(s in 0.0f64..50.0, sp in 0.0f64..50.0, ps in 0.0f64..5.0, level in 0.01f64..100.0, rho in 1.0f64..5.0) {
            let p = policy_with_level(level, rho);
            let pw = allocate_power(&triple(s, sp, ps), &p);
            prop_assert!(pw >= 0.0);
            prop_assert!(pw * sp.max(GAMMA_SP_FLOOR) <= rho * (1.0 + 1e-12));
        }

        #[test]
        fn allocation_monotone(s in 0.01f64..50.0, sp in 0.01f64..50.0, ps in 0.0f64..5.0, ds in 0.0f64..5.0, dsp in 0.0f64..5.0, level in 0.1f64..100.0) {
            let p = policy_with_level(level, 3.0);
            let base = allocate_power(&triple(s, sp, ps), &p);
            prop_assert!(allocate_power(&triple(s + ds, sp, ps), &p) + 1e-12 >= base);
            prop_assert!(allocate_power(&triple(s, sp + dsp, ps), &p) <= base + 1e-12);
        }
    }
}
