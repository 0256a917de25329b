//! Rician and Rayleigh fading links, joint channel-power draws and the
//! closed-form densities used by the capacity integrals.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::par;
use crate::rng::Stream;
use crate::specfun::{self, SpecFunError};
use crate::stats::RunningStats;

/// K-factor used to realise a deterministic (AWGN-like) link.
pub const AWGN_K: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("invalid {field}: {value}")]
    Invalid { field: &'static str, value: f64 },
    #[error(transparent)]
    SpecFun(#[from] SpecFunError),
    #[error("unknown scenario '{0}'")]
    UnknownScenario(String),
}

fn invalid(field: &'static str, value: f64) -> ChannelError {
    ChannelError::Invalid { field, value }
}

/// One link: K-factor (linear), average power and LoS phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelSpec {
    pub k_factor: f64,
    pub avg_power: f64,
    pub los_phase: f64,
}

impl ChannelSpec {
    pub fn new(k_factor: f64, avg_power: f64, los_phase: f64) -> Result<Self, ChannelError> {
        if !(k_factor >= 0.0) || !k_factor.is_finite() {
            return Err(invalid("k_factor", k_factor));
        }
        if !(avg_power > 0.0) || !avg_power.is_finite() {
            return Err(invalid("avg_power", avg_power));
        }
        if !los_phase.is_finite() {
            return Err(invalid("los_phase", los_phase));
        }
        Ok(Self {
            k_factor,
            avg_power,
            los_phase,
        })
    }

    /// Rician link with zero LoS phase.
    ///
    /// # Panics
    /// If `k_factor < 0` or `avg_power <= 0`.
    pub fn rician(k_factor: f64, avg_power: f64) -> Self {
        Self::new(k_factor, avg_power, 0.0).expect("valid Rician parameters")
    }

    /// Rayleigh link (`K = 0`).
    ///
    /// # Panics
    /// If `avg_power <= 0`.
    pub fn rayleigh(avg_power: f64) -> Self {
        Self::rician(0.0, avg_power)
    }

    /// Near-deterministic link with `K = AWGN_K`.
    pub fn awgn(avg_power: f64) -> Self {
        Self::rician(AWGN_K, avg_power)
    }

    pub fn with_phase(mut self, los_phase: f64) -> Self {
        self.los_phase = los_phase;
        self
    }

    /// Fraction of the average power carried by the LoS term.
    pub fn los_fraction(&self) -> f64 {
        self.k_factor / (self.k_factor + 1.0)
    }
}

/// Instantaneous powers of the SU→SU, SU→PU and PU→SU links.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ChannelTriple {
    pub gamma_s: f64,
    pub gamma_sp: f64,
    pub gamma_ps: f64,
}

/// The three links of one SU pair plus the primary transmit SNR `γ̄_p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemSpec {
    pub su_su: ChannelSpec,
    pub su_pu: ChannelSpec,
    pub pu_su: ChannelSpec,
    pub pu_tx_power: f64,
}

impl SystemSpec {
    pub fn new(
        su_su: ChannelSpec,
        su_pu: ChannelSpec,
        pu_su: ChannelSpec,
        pu_tx_power: f64,
    ) -> Result<Self, ChannelError> {
        for s in [su_su, su_pu, pu_su] {
            ChannelSpec::new(s.k_factor, s.avg_power, s.los_phase)?;
        }
        if !(pu_tx_power > 0.0) || !pu_tx_power.is_finite() {
            return Err(invalid("pu_tx_power", pu_tx_power));
        }
        Ok(Self {
            su_su,
            su_pu,
            pu_su,
            pu_tx_power,
        })
    }
}

/// Anything that can draw joint channel powers for one SU pair.
pub trait TripleSampler: Sync {
    fn sample_triple(&self, rng: &mut Stream) -> ChannelTriple;
    /// Primary transmit SNR `γ̄_p` seen by the SU receiver.
    fn pu_tx_power(&self) -> f64;
}

impl TripleSampler for SystemSpec {
    fn sample_triple(&self, rng: &mut Stream) -> ChannelTriple {
        ChannelTriple {
            gamma_s: sample_rician(&self.su_su, rng).norm_sqr(),
            gamma_sp: sample_rician(&self.su_pu, rng).norm_sqr(),
            gamma_ps: sample_rician(&self.pu_su, rng).norm_sqr(),
        }
    }

    fn pu_tx_power(&self) -> f64 {
        self.pu_tx_power
    }
}

/// Standard circular complex Gaussian with unit variance.
pub fn complex_gaussian(rng: &mut Stream) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Draws one complex gain `√γ̄ (√(K/(K+1)) e^{jφ} + v)`, `v ~ CN(0, 1/(K+1))`.
pub fn sample_rician(spec: &ChannelSpec, rng: &mut Stream) -> Complex64 {
    let k = spec.k_factor;
    let los = Complex64::from_polar((k / (k + 1.0)).sqrt(), spec.los_phase);
    let diffuse = complex_gaussian(rng) * (1.0 / (k + 1.0)).sqrt();
    (los + diffuse) * spec.avg_power.sqrt()
}

/// Density of the channel power `γ = |h|²`.
pub fn rician_power_pdf(gamma: f64, spec: &ChannelSpec) -> Result<f64, ChannelError> {
    if !(gamma >= 0.0) {
        return Err(invalid("gamma", gamma));
    }
    let k = spec.k_factor;
    let g = spec.avg_power;
    let x = 2.0 * (k * (k + 1.0) * gamma / g).sqrt();
    let exponent = -((k).sqrt() - ((k + 1.0) * gamma / g).sqrt()).powi(2);
    Ok((k + 1.0) / g * exponent.exp() * specfun::bessel_i0e(x)?)
}

/// Distribution function of the channel power, `1 − Q₁(√(2K), √(2(K+1)γ/γ̄))`.
pub fn rician_power_cdf(gamma: f64, spec: &ChannelSpec) -> Result<f64, ChannelError> {
    if !(gamma >= 0.0) {
        return Err(invalid("gamma", gamma));
    }
    let k = spec.k_factor;
    let a = (2.0 * k).sqrt();
    let b = (2.0 * (k + 1.0) * gamma / spec.avg_power).sqrt();
    Ok(specfun::marcum_q1_complement(a, b)?)
}

/// Density of `z = γ_s/γ_sp` for a Rayleigh SU→SU link and a Rician SU→PU
/// link with factor `k_sp`.
pub fn ratio_pdf_z(z: f64, k_sp: f64, gbar_s: f64, gbar_sp: f64) -> Result<f64, ChannelError> {
    if !(z >= 0.0) {
        return Err(invalid("z", z));
    }
    if !(k_sp >= 0.0) {
        return Err(invalid("k_sp", k_sp));
    }
    let r = gbar_sp / gbar_s;
    let c = 1.0 + k_sp;
    let u = r * z;
    let d = c + u;
    Ok(r * c * (c * c + u) / (d * d * d) * (-k_sp * u / d).exp())
}

/// Density of `z` when the SU→PU power is deterministic and the SU→SU power
/// exponential, i.e. the reciprocal-exponential law.
pub fn inverse_exponential_pdf_z(z: f64, gbar_s: f64, gbar_sp: f64) -> Result<f64, ChannelError> {
    if !(z > 0.0) {
        return Err(invalid("z", z));
    }
    let r = gbar_s / gbar_sp;
    Ok(r / (z * z) * (-r / z).exp())
}

/// Closed-form envelope variance expression, evaluated as written:
/// `2γ̄/(K+1) + K/(K+1) − πγ̄/(2(K+1)) · L²_{1/2}(−K/(2γ̄))`.
///
/// Its first two terms are not homogeneous in `γ̄`, so it only agrees with
/// the true envelope variance in special cases; see
/// [`envelope_variance_check`].
pub fn rician_envelope_variance(spec: &ChannelSpec) -> Result<f64, ChannelError> {
    let k = spec.k_factor;
    let g = spec.avg_power;
    let l = specfun::laguerre_half(-k / (2.0 * g))?;
    let v = 2.0 * g / (k + 1.0) + k / (k + 1.0) - PI * g / (2.0 * (k + 1.0)) * l * l;
    Ok(v.max(0.0))
}

/// Closed-form versus sampled envelope variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceCheck {
    pub closed_form: f64,
    pub monte_carlo: f64,
    pub monte_carlo_std_err: f64,
    pub relative_gap: f64,
    pub agrees_within_5pct: bool,
}

/// Compares [`rician_envelope_variance`] with the sample variance of `|h|`.
pub fn envelope_variance_check(
    spec: &ChannelSpec,
    samples: usize,
    seed: u64,
) -> Result<VarianceCheck, ChannelError> {
    let closed_form = rician_envelope_variance(spec)?;
    let stats: RunningStats = par::reduce_chunks(
        samples,
        seed,
        crate::rng::domain::AUXILIARY,
        RunningStats::new,
        |rng, range, acc| range.for_each(|_| acc.push(sample_rician(spec, rng).norm())),
    );
    let monte_carlo = stats.variance();
    // Standard error of a sample variance under a normal approximation.
    let monte_carlo_std_err = monte_carlo * (2.0 / (samples.max(2) - 1) as f64).sqrt();
    let relative_gap = (closed_form - monte_carlo).abs() / monte_carlo;
    Ok(VarianceCheck {
        closed_form,
        monte_carlo,
        monte_carlo_std_err,
        relative_gap,
        agrees_within_5pct: relative_gap <= 0.05,
    })
}

/// Fading taxonomy, named interference-links first: `RicianRayleigh` has
/// Rician SU→PU and PU→SU links and a Rayleigh SU→SU link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    Awgn,
    RicianRician,
    RicianRayleigh,
    RayleighRayleigh,
    RayleighRician,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::Awgn,
        Scenario::RicianRician,
        Scenario::RicianRayleigh,
        Scenario::RayleighRayleigh,
        Scenario::RayleighRician,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Scenario::Awgn => "awgn",
            Scenario::RicianRician => "rician-rician",
            Scenario::RicianRayleigh => "rician-rayleigh",
            Scenario::RayleighRayleigh => "rayleigh-rayleigh",
            Scenario::RayleighRician => "rayleigh-rician",
        }
    }

    /// K-factors `(interference, su_su)` given the Rician factor `k`.
    pub fn k_factors(self, k: f64) -> (f64, f64) {
        match self {
            Scenario::Awgn => (AWGN_K, AWGN_K),
            Scenario::RicianRician => (k, k),
            Scenario::RicianRayleigh => (k, 0.0),
            Scenario::RayleighRayleigh => (0.0, 0.0),
            Scenario::RayleighRician => (0.0, k),
        }
    }

    /// Builds the three-link system for this scenario.
    pub fn system(self, p: &LinkParams) -> Result<SystemSpec, ChannelError> {
        let (ki, ks) = self.k_factors(p.k_factor);
        SystemSpec::new(
            ChannelSpec::new(ks, p.gbar_s, p.los_phases[0])?,
            ChannelSpec::new(ki, p.gbar_sp, p.los_phases[1])?,
            ChannelSpec::new(ki, p.gbar_ps, p.los_phases[2])?,
            p.gbar_p,
        )
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Scenario {
    type Err = ChannelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace(['_', ' '], "-");
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.label() == key)
            .ok_or_else(|| ChannelError::UnknownScenario(s.to_string()))
    }
}

/// Linear-unit parameters shared by all links of a scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkParams {
    pub k_factor: f64,
    pub gbar_s: f64,
    pub gbar_sp: f64,
    pub gbar_ps: f64,
    pub gbar_p: f64,
    /// LoS phases of the SU→SU, SU→PU and PU→SU links.
    pub los_phases: [f64; 3],
}

impl Default for LinkParams {
    /// Unit average SNRs, `γ̄_p = 10` and `K = 10`.
    fn default() -> Self {
        Self {
            k_factor: 10.0,
            gbar_s: 1.0,
            gbar_sp: 1.0,
            gbar_ps: 1.0,
            gbar_p: 10.0,
            los_phases: [0.0; 3],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{integrate, integrate_to_inf, Tolerance};
    use crate::rng::substream;
    use crate::stats::ks_statistic;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn tol() -> Tolerance {
        Tolerance::new(1e-11, 1e-11)
    }

    #[test]
    fn awgn_gain_is_deterministic_magnitude() {
        let mut rng = substream(1, 0);
        let spec = ChannelSpec::awgn(2.0);
        for _ in 0..100 {
            assert_relative_eq!(
                sample_rician(&spec, &mut rng).norm(),
                2f64.sqrt(),
                max_relative = 1e-5
            );
        }
    }

    #[test]
    fn rayleigh_power_mean() {
        let spec = ChannelSpec::rayleigh(1.0);
        let mut rng = substream(2, 0);
        let mean: f64 = (0..1_000_000)
            .map(|_| sample_rician(&spec, &mut rng).norm_sqr())
            .sum::<f64>()
            / 1e6;
        assert!((mean - 1.0).abs() < 0.005);
    }

    #[test]
    fn rician_mean_gain_is_los() {
        let phi = 0.7;
        let spec = ChannelSpec::rician(10.0, 1.0).with_phase(phi);
        let mut rng = substream(3, 0);
        let n = 200_000;
        let mean = (0..n)
            .map(|_| sample_rician(&spec, &mut rng))
            .sum::<Complex64>()
            / n as f64;
        let want = Complex64::from_polar((10.0f64 / 11.0).sqrt(), phi);
        assert!((mean - want).norm() < 0.01);
    }

    #[test]
    fn power_pdf_special_values() {
        let r = ChannelSpec::rayleigh(2.0);
        assert_relative_eq!(
            rician_power_pdf(1.0, &r).unwrap(),
            0.5 * (-0.5f64).exp(),
            max_relative = 1e-14
        );
        let k10 = ChannelSpec::rician(10.0, 1.0);
        assert_relative_eq!(
            rician_power_pdf(0.0, &k10).unwrap(),
            11.0 * (-10f64).exp(),
            max_relative = 1e-14
        );
        assert!(rician_power_pdf(-1.0, &k10).is_err());
    }

    #[test]
    fn power_pdf_normalised_and_matches_cdf() {
        for k in [0.0, 1.0, 10.0, 100.0] {
            let spec = ChannelSpec::rician(k, 1.0);
            let total =
                integrate_to_inf(|g| rician_power_pdf(g, &spec).unwrap(), 0.0, tol()).unwrap();
            assert!((total.value - 1.0).abs() < 1e-8, "K={k}");
        }
        let spec = ChannelSpec::rician(10.0, 1.0);
        let q = integrate(|g| rician_power_pdf(g, &spec).unwrap(), 0.0, 1.0, tol()).unwrap();
        assert!((q.value - rician_power_cdf(1.0, &spec).unwrap()).abs() < 1e-8);
    }

    #[test]
    fn cdf_reductions() {
        let k0 = ChannelSpec::rayleigh(1.5);
        assert_eq!(rician_power_cdf(0.0, &k0).unwrap(), 0.0);
        assert_relative_eq!(
            rician_power_cdf(0.9, &k0).unwrap(),
            1.0 - (-0.6f64).exp(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn sampled_power_matches_cdf() {
        let spec = ChannelSpec::rician(10.0, 1.0).with_phase(1.1);
        let mut xs = par::generate(1_000_000, 4, 0, |r| sample_rician(&spec, r).norm_sqr());
        let d = ks_statistic(&mut xs, |g| rician_power_cdf(g, &spec).unwrap());
        assert!(d < 0.005, "KS = {d}");
    }

    #[test]
    fn ratio_pdf_forms() {
        assert_relative_eq!(
            ratio_pdf_z(0.0, 10.0, 2.0, 1.0).unwrap(),
            0.5,
            max_relative = 1e-15
        );
        for z in [0.0, 0.3, 2.0, 40.0] {
            let ll = 1.0 / (2.0 * (1.0f64 + z / 2.0).powi(2));
            assert!((ratio_pdf_z(z, 0.0, 2.0, 1.0).unwrap() - ll).abs() < 1e-12);
        }
        assert!(
            ratio_pdf_z(100.0, 0.0, 1.0, 1.0).unwrap()
                > ratio_pdf_z(100.0, 10.0, 1.0, 1.0).unwrap()
        );
        assert!(ratio_pdf_z(-1.0, 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn ratio_pdf_normalised() {
        for k in [0.0, 10.0] {
            let q = integrate_to_inf(|z| ratio_pdf_z(z, k, 1.0, 1.0).unwrap(), 0.0, tol()).unwrap();
            assert!((q.value - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn ratio_pdf_matches_histogram() {
        let (gs, gsp) = (ChannelSpec::rayleigh(1.0), ChannelSpec::rician(10.0, 1.0));
        let zs = par::generate(1_000_000, 5, 0, |r| {
            sample_rician(&gs, r).norm_sqr() / sample_rician(&gsp, r).norm_sqr()
        });
        let width = 0.25;
        let bins = 40;
        let mut counts = vec![0usize; bins];
        for z in &zs {
            let b = (z / width) as usize;
            if b < bins {
                counts[b] += 1;
            }
        }
        let worst = counts
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let lo = i as f64 * width;
                let mass = integrate(
                    |z| ratio_pdf_z(z, 10.0, 1.0, 1.0).unwrap(),
                    lo,
                    lo + width,
                    tol(),
                )
                .unwrap()
                .value;
                (c as f64 / zs.len() as f64 - mass).abs() / width
            })
            .fold(0.0, f64::max);
        assert!(worst < 0.01, "sup-norm gap {worst}");
    }

    #[test]
    fn inverse_exponential_law() {
        assert_relative_eq!(
            inverse_exponential_pdf_z(1.0, 1.0, 1.0).unwrap(),
            (-1f64).exp(),
            max_relative = 1e-15
        );
        let q = integrate_to_inf(
            |z| {
                if z == 0.0 {
                    0.0
                } else {
                    inverse_exponential_pdf_z(z, 1.0, 1.0).unwrap()
                }
            },
            0.0,
            tol(),
        )
        .unwrap();
        assert!((q.value - 1.0).abs() < 1e-8);
        let z = 1e6;
        assert_relative_eq!(
            z * z * inverse_exponential_pdf_z(z, 2.0, 1.0).unwrap(),
            2.0,
            max_relative = 1e-5
        );
        assert!(inverse_exponential_pdf_z(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn envelope_variance_limits_and_ordering() {
        assert!(rician_envelope_variance(&ChannelSpec::rician(1e6, 1.0)).unwrap() < 1e-3);
        let v = |k| rician_envelope_variance(&ChannelSpec::rician(k, 1.0)).unwrap();
        assert!(v(1.0) > v(10.0) && v(10.0) > v(100.0));
    }

    #[test]
    fn envelope_variance_check_reports() {
        let c = envelope_variance_check(&ChannelSpec::rician(10.0, 1.0), 200_000, 7).unwrap();
        assert!(c.monte_carlo > 0.0 && c.closed_form >= 0.0);
        assert_eq!(c.agrees_within_5pct, c.relative_gap <= 0.05);
    }

    #[test]
    fn scenario_names_round_trip() {
        for sc in Scenario::ALL {
            assert_eq!(sc.label().parse::<Scenario>().unwrap(), sc);
        }
        assert!("rician".parse::<Scenario>().is_err());
        let sys = Scenario::RicianRayleigh
            .system(&LinkParams::default())
            .unwrap();
        assert_eq!(sys.su_su.k_factor, 0.0);
        assert_eq!(sys.su_pu.k_factor, 10.0);
    }

    proptest! {
        #[test]
        fn pdfs_are_non_negative(g in 0.0f64..50.0, k in 0.0f64..200.0, avg in 0.05f64..20.0) {
            let spec = ChannelSpec::rician(k, avg);
            prop_assert!(rician_power_pdf(g, &spec).unwrap() >= 0.0);
            let c = rician_power_cdf(g, &spec).unwrap();
            prop_assert!((0.0..=1.0).contains(&c));
            prop_assert!(ratio_pdf_z(g, k, avg, 1.0).unwrap() >= 0.0);
        }

        #[test]
        fn cdf_is_monotone(g in 0.0f64..20.0, dg in 0.001f64..2.0, k in 0.0f64..50.0) {
            let spec = ChannelSpec::rician(k, 1.0);
            prop_assert!(rician_power_cdf(g + dg, &spec).unwrap() + 1e-12 >= rician_power_cdf(g, &spec).unwrap());
        }
    }
}
