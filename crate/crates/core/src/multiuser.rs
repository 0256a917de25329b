//! N-pair parallel access channel with max-SINR scheduling.
//!
//! Every slot each SU pair sees fresh fading; the scheduler picks the pair
//! with the largest `γ_s (Q_p/γ_sp) / (1 + γ̄_p γ_ps)` and that pair transmits
//! at its peak-interference power. Scaling experiments draw the largest
//! network once per slot and read smaller networks off prefix maxima, so all
//! `N` share common random numbers.

use std::f64::consts::LN_2;

use thiserror::Error;

use crate::channels::{
    ChannelError, ChannelSpec, ChannelTriple, LinkParams, Scenario, SystemSpec, TripleSampler,
};
use crate::par::{self, Merge};
use crate::rab::{LosBeamspaceMatrix, RabConfig, RabError, RabSystem};
use crate::rng::{domain, substream, Stream};
use crate::specfun::SpecFunError;
use crate::stats::RunningStats;

#[derive(Debug, Error)]
pub enum MultiuserError {
    #[error("invalid {field}: {detail}")]
    Invalid { field: &'static str, detail: String },
    #[error("empty snapshot")]
    EmptySnapshot,
    #[error("bisection for the minimum scale did not bracket a root at n = {n}")]
    Bracket { n: u64 },
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Rab(#[from] RabError),
    #[error(transparent)]
    SpecFun(#[from] SpecFunError),
}

fn invalid(field: &'static str, detail: impl ToString) -> MultiuserError {
    MultiuserError::Invalid {
        field,
        detail: detail.to_string(),
    }
}

/// Scheduling decision for one slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scheduled {
    pub index: usize,
    pub sinr: f64,
}

/// SINR of a pair transmitting at `min(Q_p/γ_sp, max_tx_power)`.
pub fn pair_sinr(g: &ChannelTriple, q_p: f64, gbar_p: f64, max_tx_power: f64) -> f64 {
    let power = (q_p / g.gamma_sp).min(max_tx_power);
    g.gamma_s * power / (1.0 + gbar_p * g.gamma_ps)
}

/// Picks the pair with the best SINR; ties go to the lowest index.
pub fn schedule(
    snapshot: &[ChannelTriple],
    q_p: f64,
    gbar_p: f64,
) -> Result<Scheduled, MultiuserError> {
    let mut best: Option<Scheduled> = None;
    for (index, g) in snapshot.iter().enumerate() {
        let sinr = pair_sinr(g, q_p, gbar_p, f64::INFINITY);
        if best.is_none_or(|b| sinr > b.sinr) {
            best = Some(Scheduled { index, sinr });
        }
    }
    best.ok_or(MultiuserError::EmptySnapshot)
}

/// Ratio of two means estimated from paired samples, with a delta-method
/// standard error.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RatioStats {
    n: u64,
    sx: f64,
    sy: f64,
    sxx: f64,
    syy: f64,
    sxy: f64,
}

impl RatioStats {
    pub fn push(&mut self, x: f64, y: f64) {
        self.n += 1;
        self.sx += x;
        self.sy += y;
        self.sxx += x * x;
        self.syy += y * y;
        self.sxy += x * y;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    /// `mean(x) / mean(y)`.
    pub fn ratio(&self) -> f64 {
        self.sx / self.sy
    }

    pub fn std_err(&self) -> f64 {
        let n = self.n as f64;
        if self.n < 2 {
            return f64::NAN;
        }
        let (mx, my) = (self.sx / n, self.sy / n);
        let vx = (self.sxx / n - mx * mx) * n / (n - 1.0);
        let vy = (self.syy / n - my * my) * n / (n - 1.0);
        let cxy = (self.sxy / n - mx * my) * n / (n - 1.0);
        let r = mx / my;
        let var = (vx - 2.0 * r * cxy + r * r * vy) / (my * my * n);
        var.max(0.0).sqrt()
    }
}

impl Merge for RatioStats {
    fn merge(&mut self, o: Self) {
        self.n += o.n;
        self.sx += o.sx;
        self.sy += o.sy;
        self.sxx += o.sxx;
        self.syy += o.syy;
        self.sxy += o.sxy;
    }
}

/// Estimate with standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainEstimate {
    pub value: f64,
    pub std_err: f64,
}

/// `E{max_n γ_{s,n}}/γ̄_s` for `n` i.i.d. Rayleigh SU→SU links.
pub fn md_gain_reference(n: usize, runs: usize, seed: u64) -> Result<GainEstimate, MultiuserError> {
    if n == 0 {
        return Err(invalid("n", 0));
    }
    let spec = ChannelSpec::rayleigh(1.0);
    let stats: RunningStats = par::reduce_chunks(
        runs,
        seed,
        domain::AUXILIARY,
        RunningStats::new,
        |rng, range, acc| {
            for _ in range {
                let best = (0..n)
                    .map(|_| crate::channels::sample_rician(&spec, rng).norm_sqr())
                    .fold(0.0, f64::max);
                acc.push(best);
            }
        },
    );
    Ok(GainEstimate {
        value: stats.mean(),
        std_err: stats.std_err(),
    })
}

/// Default transmit-power cap, as a multiple of `Q_p/γ̄_sp`, used by
/// [`pac_gain`]. Without a cap the mean SINR is infinite whenever `γ_sp`
/// has positive density at zero.
pub const DEFAULT_POWER_CAP_RATIO: f64 = 100.0;

enum PairModel {
    Plain(SystemSpec),
    Rab(Vec<RabSystem>),
}

/// `N` i.i.d. SU pairs sharing one primary link under a peak constraint.
pub struct PacNetwork {
    n_pairs: usize,
    system: SystemSpec,
    q_p: f64,
    max_tx_power: f64,
    model: PairModel,
}

impl PacNetwork {
    /// With RAB, each pair gets its own LoS beamspace geometry drawn from
    /// the geometry substreams of `seed`.
    pub fn new(
        n_pairs: usize,
        system: SystemSpec,
        q_p: f64,
        rab: Option<RabConfig>,
        seed: u64,
    ) -> Result<Self, MultiuserError> {
        if n_pairs == 0 {
            return Err(invalid("n_pairs", 0));
        }
        if !(q_p > 0.0) || !q_p.is_finite() {
            return Err(invalid("q_p", q_p));
        }
        let model = match rab {
            None => PairModel::Plain(system),
            Some(cfg) => {
                let pairs = (0..n_pairs)
                    .map(|n| {
                        let mut rng = substream(seed, domain::GEOMETRY + 1 + n as u64);
                        let s = LosBeamspaceMatrix::random(
                            cfg.m_r,
                            cfg.m_t,
                            system.su_su.avg_power,
                            &mut rng,
                        )?;
                        let sp = LosBeamspaceMatrix::random(
                            1,
                            cfg.m_t,
                            system.su_pu.avg_power,
                            &mut rng,
                        )?;
                        let ps = LosBeamspaceMatrix::random(
                            cfg.m_r,
                            1,
                            system.pu_su.avg_power,
                            &mut rng,
                        )?;
                        RabSystem::with_los(cfg, &system, [s, sp, ps])
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                PairModel::Rab(pairs)
            }
        };
        let max_tx_power = DEFAULT_POWER_CAP_RATIO * q_p / system.su_pu.avg_power;
        Ok(Self {
            n_pairs,
            system,
            q_p,
            max_tx_power,
            model,
        })
    }

    pub fn with_max_tx_power(mut self, max_tx_power: f64) -> Result<Self, MultiuserError> {
        if !(max_tx_power > 0.0) {
            return Err(invalid("max_tx_power", max_tx_power));
        }
        self.max_tx_power = max_tx_power;
        Ok(self)
    }

    pub fn n_pairs(&self) -> usize {
        self.n_pairs
    }

    pub fn q_p(&self) -> f64 {
        self.q_p
    }

    pub fn gbar_p(&self) -> f64 {
        self.system.pu_tx_power
    }

    pub fn max_tx_power(&self) -> f64 {
        self.max_tx_power
    }

    /// Draws the channels of pair `n` for one slot.
    pub fn sample_pair(&self, n: usize, rng: &mut Stream) -> ChannelTriple {
        match &self.model {
            PairModel::Plain(s) => s.sample_triple(rng),
            PairModel::Rab(pairs) => pairs[n].sample_triple(rng),
        }
    }

    /// Draws a full snapshot of all pairs.
    pub fn snapshot(&self, rng: &mut Stream) -> Vec<ChannelTriple> {
        (0..self.n_pairs)
            .map(|n| self.sample_pair(n, rng))
            .collect()
    }
}

/// `E{SINR of the scheduled pair}/E{SINR of a fixed pair}` with transmit
/// power capped at the network's `max_tx_power`.
pub fn pac_gain(network: &PacNetwork, runs: usize, seed: u64) -> GainEstimate {
    let (q_p, gbar_p, cap) = (network.q_p, network.gbar_p(), network.max_tx_power);
    let stats: RatioStats = par::reduce_chunks(
        runs,
        seed,
        domain::AUXILIARY,
        RatioStats::default,
        |rng, range, acc| {
            for _ in range {
                let mut best = 0.0f64;
                let mut first = 0.0;
                for n in 0..network.n_pairs {
                    let s = pair_sinr(&network.sample_pair(n, rng), q_p, gbar_p, cap);
                    if n == 0 {
                        first = s;
                    }
                    best = best.max(s);
                }
                acc.push(best, first);
            }
        },
    );
    GainEstimate {
        value: stats.ratio(),
        std_err: stats.std_err(),
    }
}

fn check_n(n: u64) -> Result<f64, MultiuserError> {
    if n < 2 {
        return Err(invalid("n", format!("{n} is below 2")));
    }
    Ok(n as f64)
}

fn los_growth(log_term: f64, k: f64, los_gain: f64) -> f64 {
    ((log_term / (k + 1.0)).sqrt() + (los_gain * k / (k + 1.0)).sqrt()).powi(2)
}

/// Growth-rate upper bound on the MD-MID gain for Rician links, with the
/// `O(ln ln N)` term taken as `ln ln N`.
///
/// The minimum-interference factors are `(√(1/(N(K+1))) + √(K/(K+1)))²`
/// in the denominator; their additive `O(ln N)` remainder is omitted,
/// otherwise the all-Rayleigh case would not reduce to `N² ln N`.
pub fn theorem2_bound(n: u64, k_s: f64, k_sp: f64, k_ps: f64) -> Result<f64, MultiuserError> {
    let nf = check_n(n)?;
    let ln = nf.ln();
    let numerator = los_growth(ln, k_s, 1.0) + ln.ln();
    let d_sp = los_growth(1.0 / nf, k_sp, 1.0);
    let d_ps = los_growth(1.0 / nf, k_ps, 1.0);
    Ok(numerator / (d_sp * d_ps))
}

/// Growth-rate upper bound with RAB on `m_t` and `m_r` basis patterns.
pub fn theorem3_bound(n: u64, k_s: f64, m_t: usize, m_r: usize) -> Result<f64, MultiuserError> {
    let nf = check_n(n)?;
    if m_t == 0 || m_r == 0 {
        return Err(invalid("m_t/m_r", "pattern counts must be positive"));
    }
    let ln = nf.ln();
    Ok(nf * nf * (los_growth(ln, k_s, (m_t * m_r) as f64) + ln.ln()))
}

/// Scale `d_N` of the minimum of `n` i.i.d. Rician powers: the `1/N`
/// quantile of the power distribution.
pub fn extreme_min_scale(n: u64, spec: &ChannelSpec) -> Result<f64, MultiuserError> {
    let target = 1.0 / check_n(n)?;
    let cdf = |d: f64| crate::channels::rician_power_cdf(d, spec);
    let mut lo = 0.0f64;
    let mut hi = spec.avg_power;
    let mut expansions = 0;
    while cdf(hi)? < target {
        hi *= 2.0;
        expansions += 1;
        if expansions > 200 {
            return Err(MultiuserError::Bracket { n });
        }
    }
    // Shrink the bracket geometrically first so tiny quantiles keep full
    // relative precision.
    while cdf(hi * 1e-3)? >= target && hi > f64::MIN_POSITIVE * 1e6 {
        hi *= 1e-3;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if cdf(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// What [`capacity_scaling_experiment`] simulates.
#[derive(Debug, Clone, Copy)]
pub struct ScalingSetup {
    pub scenario: Scenario,
    pub params: LinkParams,
    pub q_p: f64,
    pub rab: Option<RabConfig>,
}

/// One row of a scaling experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingPoint {
    pub n: usize,
    /// Sum capacity of the scheduled pair in bps/Hz.
    pub capacity: f64,
    /// `C(N)/C(1)`.
    pub norm_capacity: f64,
    pub norm_by_log_n: f64,
    pub norm_by_log_log_n: f64,
    /// Standard error of `norm_capacity`.
    pub std_err: f64,
}

struct PrefixStats(Vec<RatioStats>);

impl Merge for PrefixStats {
    fn merge(&mut self, other: Self) {
        for (a, b) in self.0.iter_mut().zip(other.0) {
            a.merge(b);
        }
    }
}

/// Normalised sum capacity versus the number of pairs.
pub fn capacity_scaling_experiment(
    setup: &ScalingSetup,
    n_list: &[usize],
    runs: usize,
    seed: u64,
) -> Result<Vec<ScalingPoint>, MultiuserError> {
    if n_list.is_empty() || n_list[0] == 0 || n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid(
            "n_list",
            "must be strictly ascending positive integers",
        ));
    }
    if runs < 2 {
        return Err(invalid("runs", runs));
    }
    let n_max = *n_list.last().expect("non-empty");
    let system = setup.scenario.system(&setup.params)?;
    let network = PacNetwork::new(n_max, system, setup.q_p, setup.rab, seed)?;
    let (q_p, gbar_p) = (network.q_p, network.gbar_p());

    let stats = par::reduce_chunks(
        runs,
        seed,
        domain::SCALING,
        || PrefixStats(vec![RatioStats::default(); n_list.len()]),
        |rng, range, acc| {
            for _ in range {
                let mut best = 0.0f64;
                let mut single = 0.0;
                let mut next = 0;
                for n in 0..n_max {
                    best = best.max(pair_sinr(
                        &network.sample_pair(n, rng),
                        q_p,
                        gbar_p,
                        f64::INFINITY,
                    ));
                    if n == 0 {
                        single = best.ln_1p() / LN_2;
                    }
                    if n + 1 == n_list[next] {
                        acc.0[next].push(best.ln_1p() / LN_2, single);
                        next += 1;
                    }
                }
            }
        },
    );

    Ok(n_list
        .iter()
        .zip(stats.0)
        .map(|(&n, s)| {
            let norm = s.ratio();
            let ln = (n as f64).ln();
            ScalingPoint {
                n,
                capacity: s.sx / s.count() as f64,
                norm_capacity: norm,
                norm_by_log_n: if n >= 2 { norm / ln } else { f64::NAN },
                norm_by_log_log_n: if ln > 1.0 { norm / ln.ln() } else { f64::NAN },
                std_err: s.std_err(),
            }
        })
        .collect())
}
