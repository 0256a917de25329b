//! Random aerial beamforming (RAB).
//!
//! Each slot the SU transmitter (and, in random mode, the receiver) draws
//! fresh unit-modulus phases for its basis patterns. The deterministic LoS
//! part of every link then adds up with random phases, which makes even a
//! strongly Rician link fade. In smart-receive mode the SU receiver instead
//! co-phases its patterns to the SU→SU LoS superposition, keeping the
//! interference links randomised while the desired link gains coherently.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use thiserror::Error;

use crate::channels::{complex_gaussian, ChannelSpec, ChannelTriple, SystemSpec, TripleSampler};
use crate::espar::{orthonormal_basis, BasisPatternSet, EsparError, EsparGeometry};
use crate::par::{self, Merge};
use crate::rng::{domain, substream, Stream};

#[derive(Debug, Error)]
pub enum RabError {
    #[error("invalid {field}: {detail}")]
    Invalid { field: &'static str, detail: String },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Espar(#[from] EsparError),
}

/// How the SU receiver sets its pattern phases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReceiveMode {
    /// Independent uniform phases each slot.
    Random,
    /// Phases matched to the SU→SU LoS superposition.
    Smart,
}

/// Model of the diffuse (scattered) part of each link.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScattererModel {
    /// `count` point scatterers at uniform angles, seen through the ESPAR
    /// basis patterns.
    Discrete { count: usize },
    /// Draw the scattered term directly as a circular Gaussian. Same law as
    /// `Discrete`, much cheaper.
    Gaussian,
}

impl Default for ScattererModel {
    fn default() -> Self {
        ScattererModel::Discrete { count: 20 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RabConfig {
    pub m_t: usize,
    pub m_r: usize,
    pub receive_mode: ReceiveMode,
    pub scatterers: ScattererModel,
}

impl RabConfig {
    pub fn new(m_t: usize, m_r: usize, receive_mode: ReceiveMode) -> Result<Self, RabError> {
        if m_t == 0 || m_r == 0 {
            return Err(RabError::Invalid {
                field: "m_t/m_r",
                detail: format!("{m_t}x{m_r}"),
            });
        }
        Ok(Self {
            m_t,
            m_r,
            receive_mode,
            scatterers: ScattererModel::default(),
        })
    }

    pub fn with_scatterers(mut self, scatterers: ScattererModel) -> Self {
        self.scatterers = scatterers;
        self
    }
}

/// Deterministic LoS beamspace matrix with entries `√γ̄ e^{jφ^{k,m}}`.
/// Rows index receive patterns, columns transmit patterns.
#[derive(Debug, Clone, PartialEq)]
pub struct LosBeamspaceMatrix {
    gbar: f64,
    phases: DMatrix<f64>,
    entries: DMatrix<Complex64>,
}

impl LosBeamspaceMatrix {
    pub fn new(gbar: f64, phases: DMatrix<f64>) -> Result<Self, RabError> {
        if !(gbar > 0.0) {
            return Err(RabError::Invalid {
                field: "gbar",
                detail: gbar.to_string(),
            });
        }
        let amp = gbar.sqrt();
        let entries = phases.map(|p| Complex64::from_polar(amp, p));
        Ok(Self {
            gbar,
            phases,
            entries,
        })
    }

    /// Phases drawn i.i.d. uniform on `[0, 2π)`.
    pub fn random(m_r: usize, m_t: usize, gbar: f64, rng: &mut Stream) -> Result<Self, RabError> {
        let phases = DMatrix::from_fn(m_r, m_t, |_, _| rng.random::<f64>() * 2.0 * PI);
        Self::new(gbar, phases)
    }

    pub fn gbar(&self) -> f64 {
        self.gbar
    }

    pub fn phases(&self) -> &DMatrix<f64> {
        &self.phases
    }

    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn shape(&self) -> (usize, usize) {
        self.entries.shape()
    }
}

/// Unit-norm weights `e^{jθ_i}/√m` from given phases.
pub fn weights_from_phases(phases: &[f64]) -> DVector<Complex64> {
    let amp = 1.0 / (phases.len() as f64).sqrt();
    DVector::from_iterator(
        phases.len(),
        phases.iter().map(|&p| Complex64::from_polar(amp, p)),
    )
}

/// Random weights `e^{jθ_i}/√m`, `θ_i` uniform.
pub fn draw_weights(m: usize, rng: &mut Stream) -> DVector<Complex64> {
    let amp = 1.0 / (m as f64).sqrt();
    DVector::from_fn(m, |_, _| {
        Complex64::from_polar(amp, rng.random::<f64>() * 2.0 * PI)
    })
}

/// Scatterer gains and the pattern responses toward each scatterer.
#[derive(Debug, Clone, PartialEq)]
pub struct ScattererSet {
    pub gains: DVector<Complex64>,
    /// `M_R × Q` receive pattern responses.
    pub phi_r: DMatrix<Complex64>,
    /// `M_T × Q` transmit pattern responses.
    pub phi_t: DMatrix<Complex64>,
}

impl ScattererSet {
    /// `count` scatterers at uniform departure/arrival angles, seen through
    /// the first `w_t.len()` / `w_r.len()` patterns of `tx` / `rx`.
    ///
    /// Gains are circular Gaussian and rescaled for this slot so that
    /// `w_rᴴ Φ_R diag(β) Φ_Tᴴ w_t` is exactly `CN(0, gbar)`.
    pub fn draw(
        count: usize,
        gbar: f64,
        tx: &BasisPatternSet,
        rx: &BasisPatternSet,
        w_r: &DVector<Complex64>,
        w_t: &DVector<Complex64>,
        rng: &mut Stream,
    ) -> Self {
        let (m_r, m_t) = (w_r.len(), w_t.len());
        let mut phi_r = DMatrix::zeros(m_r, count);
        let mut phi_t = DMatrix::zeros(m_t, count);
        let mut energy = 0.0;
        for q in 0..count {
            let theta_t = rng.random::<f64>() * 2.0 * PI;
            let theta_r = rng.random::<f64>() * 2.0 * PI;
            phi_t.set_column(q, &tx.evaluate_first(m_t, theta_t));
            phi_r.set_column(q, &rx.evaluate_first(m_r, theta_r));
            let c = w_r.dotc(&phi_r.column(q)).conj() * phi_t.column(q).dotc(w_t);
            energy += c.norm_sqr();
        }
        let scale = if energy > 0.0 {
            (gbar / energy).sqrt()
        } else {
            0.0
        };
        let gains = DVector::from_fn(count, |_, _| complex_gaussian(rng) * scale);
        Self {
            gains,
            phi_r,
            phi_t,
        }
    }

    /// Single effective scatterer aligned with the weights, with gain
    /// `CN(0, gbar)`: the Gaussian model written as a scatterer set.
    pub fn gaussian(
        gbar: f64,
        w_r: &DVector<Complex64>,
        w_t: &DVector<Complex64>,
        rng: &mut Stream,
    ) -> Self {
        Self {
            gains: DVector::from_element(1, complex_gaussian(rng) * gbar.sqrt()),
            phi_r: DMatrix::from_column_slice(w_r.len(), 1, w_r.as_slice()),
            phi_t: DMatrix::from_column_slice(w_t.len(), 1, w_t.as_slice()),
        }
    }
}

fn check_dims(
    los: &LosBeamspaceMatrix,
    w_r: &DVector<Complex64>,
    w_t: &DVector<Complex64>,
) -> Result<(), RabError> {
    let (rows, cols) = los.shape();
    if rows != w_r.len() || cols != w_t.len() {
        return Err(RabError::Dimension(format!(
            "LoS matrix {rows}x{cols} with weights of length {} and {}",
            w_r.len(),
            w_t.len()
        )));
    }
    Ok(())
}

/// LoS part of the equivalent channel, `√(K/(K+1)) w_rᴴ H̄ w_t`.
pub fn artificial_fading_component(
    spec: &ChannelSpec,
    los: &LosBeamspaceMatrix,
    w_r: &DVector<Complex64>,
    w_t: &DVector<Complex64>,
) -> Result<Complex64, RabError> {
    check_dims(los, w_r, w_t)?;
    let k = spec.k_factor;
    Ok(w_r.dotc(&(los.entries() * w_t)) * (k / (k + 1.0)).sqrt())
}

/// Equivalent scalar channel after RAB:
/// `w_rᴴ (√(K/(K+1)) H̄ + (1/√(K+1)) Φ_R diag(β) Φ_Tᴴ) w_t`.
pub fn equivalent_channel(
    spec: &ChannelSpec,
    los: &LosBeamspaceMatrix,
    scat: &ScattererSet,
    w_r: &DVector<Complex64>,
    w_t: &DVector<Complex64>,
) -> Result<Complex64, RabError> {
    let q = scat.gains.len();
    if scat.phi_r.shape() != (w_r.len(), q) || scat.phi_t.shape() != (w_t.len(), q) {
        return Err(RabError::Dimension(format!(
            "scatterer responses {:?}/{:?} for {q} gains",
            scat.phi_r.shape(),
            scat.phi_t.shape()
        )));
    }
    let u = artificial_fading_component(spec, los, w_r, w_t)?;
    let rx = scat.phi_r.adjoint() * w_r; // conj(w_rᴴ Φ_R) entries
    let tx = scat.phi_t.adjoint() * w_t;
    let v: Complex64 = (0..q).map(|i| rx[i].conj() * scat.gains[i] * tx[i]).sum();
    Ok(u + v / (spec.k_factor + 1.0).sqrt())
}

/// Per-receive-pattern LoS superposition `a_m = Σ_l e^{j(θ_{T,l} + φ^{l,m})}`.
pub fn los_superposition(los: &LosBeamspaceMatrix, w_t: &DVector<Complex64>) -> DVector<Complex64> {
    let scale = (w_t.len() as f64).sqrt() / los.gbar().sqrt();
    los.entries() * w_t * Complex64::new(scale, 0.0)
}

/// Receive phases `θ_{R,m} = −arg a_m`.
pub fn smart_receive_phases(a: &DVector<Complex64>) -> Vec<f64> {
    a.iter().map(|v| -v.arg()).collect()
}

/// Receive weights realising [`smart_receive_phases`]. The weight enters
/// conjugated, so entry `m` is `e^{j arg a_m}/√M_R`.
pub fn smart_receive_weights(a: &DVector<Complex64>) -> DVector<Complex64> {
    let amp = 1.0 / (a.len() as f64).sqrt();
    a.map(|v| Complex64::from_polar(amp, v.arg()))
}

/// Number of transmit basis patterns in the nulling analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatternCount {
    Finite(usize),
    /// Limit of many patterns, where the artificial fading is Gaussian.
    Infinite,
}

/// Probability that the artificial fading magnitude falls below `δ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NullingProbability {
    /// Closed form where one exists (one, two or infinitely many patterns).
    pub closed_form: Option<f64>,
    pub monte_carlo: f64,
    pub monte_carlo_std_err: f64,
}

/// `P(|U| < δ)` for a single receive pattern and `m_t` transmit patterns.
pub fn nulling_probability(
    m_t: PatternCount,
    k_factor: f64,
    gbar: f64,
    delta: f64,
    draws: usize,
    seed: u64,
) -> Result<NullingProbability, RabError> {
    if !(delta > 0.0) {
        return Err(RabError::Invalid {
            field: "delta",
            detail: delta.to_string(),
        });
    }
    if m_t == PatternCount::Finite(0) {
        return Err(RabError::Invalid {
            field: "m_t",
            detail: "0".into(),
        });
    }
    let los_power = k_factor * gbar / (k_factor + 1.0);
    let t = delta * delta / los_power;
    let closed_form = match m_t {
        PatternCount::Finite(1) => Some(if t > 1.0 { 1.0 } else { 0.0 }),
        PatternCount::Finite(2) => Some(if t >= 2.0 {
            1.0
        } else {
            0.5 + (t - 1.0).asin() / PI
        }),
        PatternCount::Infinite => Some(-(-t).exp_m1()),
        PatternCount::Finite(_) => None,
    };
    let d2 = delta * delta;
    let hits: u64 = par::reduce_chunks(
        draws,
        seed,
        domain::AUXILIARY,
        || 0u64,
        |rng, range, acc| {
            for _ in range {
                let u2 = match m_t {
                    PatternCount::Finite(n) => {
                        let s: Complex64 = (0..n)
                            .map(|_| Complex64::from_polar(1.0, rng.random::<f64>() * 2.0 * PI))
                            .sum();
                        los_power * s.norm_sqr() / n as f64
                    }
                    PatternCount::Infinite => los_power * complex_gaussian(rng).norm_sqr(),
                };
                if u2 < d2 {
                    *acc += 1;
                }
            }
        },
    );
    let p = hits as f64 / draws.max(1) as f64;
    Ok(NullingProbability {
        closed_form,
        monte_carlo: p,
        monte_carlo_std_err: (p * (1.0 - p) / draws.max(1) as f64).sqrt(),
    })
}

/// One RAB link: its fading parameters and LoS beamspace matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RabLink {
    pub spec: ChannelSpec,
    pub los: LosBeamspaceMatrix,
}

/// Equivalent channels of the three links in one slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RabSlot {
    pub h_s: Complex64,
    pub h_sp: Complex64,
    pub h_ps: Complex64,
}

impl Merge for RabSlot {
    fn merge(&mut self, _other: Self) {}
}

/// ESPAR radius used for the basis patterns that see the scatterers.
pub const DEFAULT_RADIUS_WAVELENGTHS: f64 = 0.25;

/// A SU pair using RAB next to a single-antenna primary user.
#[derive(Debug, Clone)]
pub struct RabSystem {
    cfg: RabConfig,
    su_su: RabLink,
    su_pu: RabLink,
    pu_su: RabLink,
    pu_tx_power: f64,
    tx_basis: BasisPatternSet,
    rx_basis: BasisPatternSet,
    single: BasisPatternSet,
}

impl RabSystem {
    /// Builds the system, drawing every LoS beamspace phase once from the
    /// geometry substream of `seed`.
    pub fn new(cfg: RabConfig, system: &SystemSpec, seed: u64) -> Result<Self, RabError> {
        let mut rng = substream(seed, domain::GEOMETRY);
        let su_su = LosBeamspaceMatrix::random(cfg.m_r, cfg.m_t, system.su_su.avg_power, &mut rng)?;
        let su_pu = LosBeamspaceMatrix::random(1, cfg.m_t, system.su_pu.avg_power, &mut rng)?;
        let pu_su = LosBeamspaceMatrix::random(cfg.m_r, 1, system.pu_su.avg_power, &mut rng)?;
        Self::with_los(cfg, system, [su_su, su_pu, pu_su])
    }

    /// Builds the system with explicit LoS matrices for the SU→SU
    /// (`M_R × M_T`), SU→PU (`1 × M_T`) and PU→SU (`M_R × 1`) links.
    pub fn with_los(
        cfg: RabConfig,
        system: &SystemSpec,
        los: [LosBeamspaceMatrix; 3],
    ) -> Result<Self, RabError> {
        let [s, sp, ps] = los;
        let want = [(cfg.m_r, cfg.m_t), (1, cfg.m_t), (cfg.m_r, 1)];
        for (got, want) in [s.shape(), sp.shape(), ps.shape()].into_iter().zip(want) {
            if got != want {
                return Err(RabError::Dimension(format!(
                    "LoS matrix {got:?}, expected {want:?}"
                )));
            }
        }
        let basis = |m: usize| {
            orthonormal_basis(&EsparGeometry::new(m, DEFAULT_RADIUS_WAVELENGTHS)?, 16 * m)
        };
        Ok(Self {
            cfg,
            su_su: RabLink {
                spec: system.su_su,
                los: s,
            },
            su_pu: RabLink {
                spec: system.su_pu,
                los: sp,
            },
            pu_su: RabLink {
                spec: system.pu_su,
                los: ps,
            },
            pu_tx_power: system.pu_tx_power,
            tx_basis: basis(cfg.m_t)?,
            rx_basis: basis(cfg.m_r)?,
            single: basis(1)?,
        })
    }

    pub fn config(&self) -> &RabConfig {
        &self.cfg
    }

    pub fn links(&self) -> [&RabLink; 3] {
        [&self.su_su, &self.su_pu, &self.pu_su]
    }

    fn link_gain(
        &self,
        link: &RabLink,
        tx: &BasisPatternSet,
        rx: &BasisPatternSet,
        w_r: &DVector<Complex64>,
        w_t: &DVector<Complex64>,
        rng: &mut Stream,
    ) -> Complex64 {
        let gbar = link.spec.avg_power;
        let scat = match self.cfg.scatterers {
            ScattererModel::Discrete { count } => {
                ScattererSet::draw(count.max(1), gbar, tx, rx, w_r, w_t, rng)
            }
            ScattererModel::Gaussian => ScattererSet::gaussian(gbar, w_r, w_t, rng),
        };
        equivalent_channel(&link.spec, &link.los, &scat, w_r, w_t)
            .expect("dimensions fixed at construction")
    }

    /// Draws one slot: fresh weights, then the three equivalent channels.
    pub fn sample_slot(&self, rng: &mut Stream) -> RabSlot {
        let w_t = draw_weights(self.cfg.m_t, rng);
        let w_r = match self.cfg.receive_mode {
            ReceiveMode::Random => draw_weights(self.cfg.m_r, rng),
            ReceiveMode::Smart => smart_receive_weights(&los_superposition(&self.su_su.los, &w_t)),
        };
        let unit = DVector::from_element(1, Complex64::new(1.0, 0.0));
        RabSlot {
            h_s: self.link_gain(&self.su_su, &self.tx_basis, &self.rx_basis, &w_r, &w_t, rng),
            h_sp: self.link_gain(&self.su_pu, &self.tx_basis, &self.single, &unit, &w_t, rng),
            h_ps: self.link_gain(&self.pu_su, &self.single, &self.rx_basis, &w_r, &unit, rng),
        }
    }
}

impl TripleSampler for RabSystem {
    fn sample_triple(&self, rng: &mut Stream) -> ChannelTriple {
        let s = self.sample_slot(rng);
        ChannelTriple {
            gamma_s: s.h_s.norm_sqr(),
            gamma_sp: s.h_sp.norm_sqr(),
            gamma_ps: s.h_ps.norm_sqr(),
        }
    }

    fn pu_tx_power(&self) -> f64 {
        self.pu_tx_power
    }
}
