//! ESPAR antenna model: steering vectors, orthonormal basis patterns,
//! reactive-load currents and the beamspace channel matrix.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EsparError {
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error(
        "grid of {grid} points is too coarse for {elements} elements (need at least {needed})"
    )]
    GridTooCoarse {
        grid: usize,
        elements: usize,
        needed: usize,
    },
    #[error("steering components are linearly dependent at index {index}")]
    Degenerate { index: usize },
    #[error("matrix is singular or ill-conditioned (condition number {condition:.3e})")]
    Singular { condition: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Load on the active element, in ohms.
pub const ACTIVE_LOAD_OHMS: f64 = 50.0;

/// One active element at the centre and `M − 1` parasitic elements on a
/// circle of radius `d` (in wavelengths).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EsparGeometry {
    num_elements: usize,
    radius_wavelengths: f64,
}

impl EsparGeometry {
    pub fn new(num_elements: usize, radius_wavelengths: f64) -> Result<Self, EsparError> {
        if num_elements == 0 {
            return Err(EsparError::Geometry(
                "at least one element is required".into(),
            ));
        }
        if !(radius_wavelengths > 0.0) || !radius_wavelengths.is_finite() {
            return Err(EsparError::Geometry(format!(
                "radius must be positive, got {radius_wavelengths}"
            )));
        }
        Ok(Self {
            num_elements,
            radius_wavelengths,
        })
    }

    pub fn num_elements(&self) -> usize {
        self.num_elements
    }

    pub fn radius_wavelengths(&self) -> f64 {
        self.radius_wavelengths
    }

    /// Electrical radius `b = 2πd/λ`.
    pub fn wavenumber_radius(&self) -> f64 {
        2.0 * PI * self.radius_wavelengths
    }

    /// Angular positions of the parasitic elements.
    pub fn element_angles(&self) -> Vec<f64> {
        let p = self.num_elements - 1;
        (0..p).map(|m| 2.0 * PI * m as f64 / p as f64).collect()
    }
}

/// Steering vector `[1, e^{jb cos(θ−θ₁)}, …]`.
pub fn steering_vector(geom: &EsparGeometry, theta: f64) -> DVector<Complex64> {
    let b = geom.wavenumber_radius();
    let mut a = DVector::from_element(geom.num_elements, Complex64::new(1.0, 0.0));
    for (m, tm) in geom.element_angles().into_iter().enumerate() {
        a[m + 1] = Complex64::from_polar(1.0, b * (theta - tm).cos());
    }
    a
}

/// Orthonormal patterns `Φ_n(θ) = Σ_m C[n,m] a_m(θ)` built on a uniform
/// angular grid, together with their samples and the projections
/// `q_n[m] = ⟨a_m, Φ_n⟩` (column `n` of `projection`).
#[derive(Debug, Clone)]
pub struct BasisPatternSet {
    geometry: EsparGeometry,
    pub grid: Vec<f64>,
    /// `M × G` samples of each pattern on the grid.
    pub patterns: DMatrix<Complex64>,
    /// `M × M`; entry `(m, n)` is `q_n[m]`.
    pub projection: DMatrix<Complex64>,
    /// `M × M`; row `n` expresses `Φ_n` in the steering components.
    pub coefficients: DMatrix<Complex64>,
}

fn grid_inner(f: &[Complex64], g: &[Complex64]) -> Complex64 {
    let s: Complex64 = f.iter().zip(g).map(|(x, y)| x * y.conj()).sum();
    s * (2.0 * PI / f.len() as f64)
}

/// Gram–Schmidt over the steering components sampled on `grid_size`
/// uniformly spaced angles, with one re-orthogonalisation pass.
pub fn orthonormal_basis(
    geom: &EsparGeometry,
    grid_size: usize,
) -> Result<BasisPatternSet, EsparError> {
    let m = geom.num_elements();
    if grid_size < 8 * m {
        return Err(EsparError::GridTooCoarse {
            grid: grid_size,
            elements: m,
            needed: 8 * m,
        });
    }
    let grid: Vec<f64> = (0..grid_size)
        .map(|g| 2.0 * PI * g as f64 / grid_size as f64)
        .collect();
    let steering: Vec<DVector<Complex64>> =
        grid.iter().map(|&t| steering_vector(geom, t)).collect();
    let component = |k: usize| -> Vec<Complex64> { steering.iter().map(|a| a[k]).collect() };

    let mut samples: Vec<Vec<Complex64>> = Vec::with_capacity(m);
    let mut coeffs = DMatrix::<Complex64>::zeros(m, m);
    for k in 0..m {
        let mut v = component(k);
        let mut c = DVector::<Complex64>::zeros(m);
        c[k] = Complex64::new(1.0, 0.0);
        let original = grid_inner(&v, &v).re.sqrt();
        for _pass in 0..2 {
            for (j, phi) in samples.iter().enumerate() {
                let r = grid_inner(&v, phi);
                v.iter_mut().zip(phi).for_each(|(x, p)| *x -= r * p);
                for col in 0..m {
                    c[col] -= r * coeffs[(j, col)];
                }
            }
        }
        let norm = grid_inner(&v, &v).re.sqrt();
        if !(norm > 1e-10 * original) {
            return Err(EsparError::Degenerate { index: k });
        }
        v.iter_mut().for_each(|x| *x /= norm);
        for col in 0..m {
            coeffs[(k, col)] = c[col] / norm;
        }
        samples.push(v);
    }

    let patterns = DMatrix::from_fn(m, grid_size, |n, g| samples[n][g]);
    let projection = DMatrix::from_fn(m, m, |row, n| grid_inner(&component(row), &samples[n]));
    Ok(BasisPatternSet {
        geometry: *geom,
        grid,
        patterns,
        projection,
        coefficients: coeffs,
    })
}

impl BasisPatternSet {
    pub fn geometry(&self) -> &EsparGeometry {
        &self.geometry
    }

    pub fn len(&self) -> usize {
        self.patterns.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All pattern values `Φ_n(θ)` at an arbitrary angle.
    pub fn evaluate(&self, theta: f64) -> DVector<Complex64> {
        &self.coefficients * steering_vector(&self.geometry, theta)
    }

    /// The first `count` pattern values at `theta`.
    pub fn evaluate_first(&self, count: usize, theta: f64) -> DVector<Complex64> {
        let full = self.evaluate(theta);
        full.rows(0, count.min(full.len())).into_owned()
    }

    /// Discrete Gram matrix `⟨Φ_i, Φ_j⟩` on the construction grid.
    pub fn gram(&self) -> DMatrix<Complex64> {
        let step = 2.0 * PI / self.grid.len() as f64;
        (&self.patterns * self.patterns.adjoint()) * Complex64::new(step, 0.0)
    }

    /// Writes `(theta_rad, pattern_index, re, im)` rows for every grid sample.
    pub fn export_csv<W: Write>(&self, out: W) -> Result<(), EsparError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["theta_rad", "pattern_index", "re", "im"])?;
        for (g, theta) in self.grid.iter().enumerate() {
            for n in 0..self.len() {
                let v = self.patterns[(n, g)];
                w.write_record([
                    theta.to_string(),
                    n.to_string(),
                    v.re.to_string(),
                    v.im.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Element currents and the condition number of the system solved.
#[derive(Debug, Clone, PartialEq)]
pub struct Currents {
    pub current: DVector<Complex64>,
    pub condition: f64,
}

fn condition_number(m: &DMatrix<Complex64>) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Solves `(Y⁻¹ + X) i = v_s u` with `X = diag(50, jx₁, …, jx_{M−1})`.
pub fn espar_currents(
    y: &DMatrix<Complex64>,
    reactances: &[f64],
    v_s: Complex64,
) -> Result<Currents, EsparError> {
    let m = y.nrows();
    if y.ncols() != m || reactances.len() + 1 != m {
        return Err(EsparError::Dimension(format!(
            "Y is {}x{} with {} reactances",
            y.nrows(),
            y.ncols(),
            reactances.len()
        )));
    }
    let y_inv = y.clone().try_inverse().ok_or(EsparError::Singular {
        condition: condition_number(y),
    })?;
    let y_inv_norm = y_inv.norm();
    let mut system = y_inv;
    system[(0, 0)] += Complex64::new(ACTIVE_LOAD_OHMS, 0.0);
    for (k, &x) in reactances.iter().enumerate() {
        system[(k + 1, k + 1)] += Complex64::new(0.0, x);
    }
    // Cancellation between Y⁻¹ and X can leave a tiny but well-shaped
    // matrix, so smallness is judged against the operands' scale.
    let scale = system.norm().max(y_inv_norm).max(ACTIVE_LOAD_OHMS);
    let sv = system.clone().svd(false, false).singular_values;
    let condition = if sv.min() == 0.0 {
        f64::INFINITY
    } else {
        scale / sv.min()
    };
    if !condition.is_finite() || condition > 1e12 {
        return Err(EsparError::Singular { condition });
    }
    let mut rhs = DVector::<Complex64>::zeros(m);
    rhs[0] = v_s;
    let current = system
        .lu()
        .solve(&rhs)
        .ok_or(EsparError::Singular { condition })?;
    Ok(Currents { current, condition })
}

/// Basis-pattern weights `w_n = iᵀ q_n`.
pub fn pattern_weights(
    current: &DVector<Complex64>,
    basis: &BasisPatternSet,
) -> Result<DVector<Complex64>, EsparError> {
    if current.len() != basis.len() {
        return Err(EsparError::Dimension(format!(
            "{} currents for {} patterns",
            current.len(),
            basis.len()
        )));
    }
    Ok(basis.projection.transpose() * current)
}

/// Radiation pattern `Σ w_n Φ_n(θ)`.
pub fn radiation_pattern(w: &DVector<Complex64>, basis: &BasisPatternSet, theta: f64) -> Complex64 {
    let phi = basis.evaluate(theta);
    w.iter().zip(phi.iter()).map(|(a, b)| a * b).sum()
}

/// Pattern responses toward `Q` scatterers and the scatterer gains.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamspaceChannel {
    /// `M_R × Q`.
    pub phi_r: DMatrix<Complex64>,
    /// `M_T × Q`.
    pub phi_t: DMatrix<Complex64>,
    /// Length `Q`.
    pub h_b: DVector<Complex64>,
}

/// `H_bs = Φ_R diag(β) Φ_Tᴴ` and its numerical rank.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamspaceMatrix {
    pub matrix: DMatrix<Complex64>,
    pub adof: usize,
}

/// Relative singular-value threshold for the rank count.
pub const RANK_TOLERANCE: f64 = 1e-10;

pub fn beamspace_channel_matrix(ch: &BeamspaceChannel) -> Result<BeamspaceMatrix, EsparError> {
    let q = ch.h_b.len();
    if ch.phi_r.ncols() != q || ch.phi_t.ncols() != q {
        return Err(EsparError::Dimension(format!(
            "responses have {} and {} columns for {} scatterers",
            ch.phi_r.ncols(),
            ch.phi_t.ncols(),
            q
        )));
    }
    let matrix = &ch.phi_r * DMatrix::from_diagonal(&ch.h_b) * ch.phi_t.adjoint();
    let sv = matrix.clone().svd(false, false).singular_values;
    let top = sv.max();
    let adof = if top == 0.0 {
        0
    } else {
        sv.iter().filter(|&&s| s > RANK_TOLERANCE * top).count()
    };
    Ok(BeamspaceMatrix { matrix, adof })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::complex_gaussian;
    use crate::rng::substream;
    use proptest::prelude::*;
    use rand::Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn steering_vector_values() {
        let g = EsparGeometry::new(5, 0.25).unwrap();
        let a = steering_vector(&g, 0.0);
        assert_eq!(a[0], c(1.0, 0.0));
        assert!((a[1] - c(0.0, 1.0)).norm() < 1e-15);
        for theta in [0.1, 2.0, 5.5] {
            assert!(steering_vector(&g, theta)
                .iter()
                .all(|v| (v.norm() - 1.0).abs() < 1e-15));
        }
    }

    #[test]
    fn single_element_basis_is_constant() {
        let g = EsparGeometry::new(1, 0.25).unwrap();
        let b = orthonormal_basis(&g, 8).unwrap();
        assert_eq!(b.len(), 1);
        let want = 1.0 / (2.0 * PI).sqrt();
        assert!(b.patterns.iter().all(|v| (v - c(want, 0.0)).norm() < 1e-14));
    }

    #[test]
    fn gram_is_identity_across_sizes() {
        for m in 2..=8 {
            for d in [0.1, 0.25, 0.5] {
                let b = orthonormal_basis(&EsparGeometry::new(m, d).unwrap(), 16 * m).unwrap();
                assert_eq!(b.len(), m);
                let err = (b.gram() - DMatrix::identity(m, m))
                    .iter()
                    .map(|v| v.norm())
                    .fold(0.0, f64::max);
                assert!(err < 1e-8, "M={m} d={d} err={err}");
            }
        }
    }

    #[test]
    fn coarse_grid_rejected() {
        let g = EsparGeometry::new(4, 0.25).unwrap();
        assert!(matches!(
            orthonormal_basis(&g, 31),
            Err(EsparError::GridTooCoarse { .. })
        ));
    }

    #[test]
    fn currents_hand_case() {
        let y = DMatrix::<Complex64>::identity(2, 2);
        let r = espar_currents(&y, &[0.0], c(1.0, 0.0)).unwrap();
        assert!((r.current[0] - c(1.0 / 51.0, 0.0)).norm() < 1e-15);
        assert!(r.current[1].norm() < 1e-15);
        let zero = espar_currents(&y, &[0.0], c(0.0, 0.0)).unwrap();
        assert!(zero.current.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn currents_singular_reports_condition() {
        let y = DMatrix::<Complex64>::zeros(2, 2);
        assert!(matches!(
            espar_currents(&y, &[0.0], c(1.0, 0.0)),
            Err(EsparError::Singular { .. })
        ));
        // Y⁻¹ + X = 0 when Y⁻¹ = −X.
        let y = DMatrix::from_diagonal(&DVector::from_vec(vec![
            c(-1.0 / 50.0, 0.0),
            c(0.0, 1.0 / 3.0),
        ]));
        let r = espar_currents(&y, &[3.0], c(1.0, 0.0));
        assert!(matches!(r, Err(EsparError::Singular { .. })), "{r:?}");
    }

    #[test]
    fn weights_of_active_only_current() {
        let b = orthonormal_basis(&EsparGeometry::new(4, 0.25).unwrap(), 64).unwrap();
        let mut u = DVector::<Complex64>::zeros(4);
        u[0] = c(1.0, 0.0);
        let w = pattern_weights(&u, &b).unwrap();
        assert!((0..4).all(|n| (w[n] - b.projection[(0, n)]).norm() < 1e-15));
        assert!(pattern_weights(&DVector::zeros(3), &b).is_err());
    }

    #[test]
    fn pattern_selection_and_zero() {
        let b = orthonormal_basis(&EsparGeometry::new(3, 0.25).unwrap(), 48).unwrap();
        let mut e1 = DVector::<Complex64>::zeros(3);
        e1[0] = c(1.0, 0.0);
        let t = 0.77;
        assert!((radiation_pattern(&e1, &b, t) - b.evaluate(t)[0]).norm() < 1e-14);
        assert_eq!(radiation_pattern(&DVector::zeros(3), &b, t), c(0.0, 0.0));
    }

    #[test]
    fn export_has_one_row_per_sample() {
        let b = orthonormal_basis(&EsparGeometry::new(2, 0.25).unwrap(), 16).unwrap();
        let mut buf = Vec::new();
        b.export_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("theta_rad,pattern_index,re,im\n"));
        assert_eq!(text.lines().count(), 1 + 16 * 2);
    }

    #[test]
    fn beamspace_rank_cases() {
        let mut rng = substream(5, 0);
        let rand_mat = |rng: &mut crate::rng::Stream, r, c| {
            DMatrix::from_fn(r, c, |_, _| complex_gaussian(rng))
        };
        let one = BeamspaceChannel {
            phi_r: rand_mat(&mut rng, 3, 1),
            phi_t: rand_mat(&mut rng, 4, 1),
            h_b: DVector::from_element(1, c(0.5, 0.2)),
        };
        assert_eq!(beamspace_channel_matrix(&one).unwrap().adof, 1);
        let zero = BeamspaceChannel {
            h_b: DVector::zeros(1),
            ..one.clone()
        };
        let z = beamspace_channel_matrix(&zero).unwrap();
        assert_eq!(z.adof, 0);
        assert!(z.matrix.iter().all(|v| v.norm() == 0.0));
        let full = BeamspaceChannel {
            phi_r: rand_mat(&mut rng, 3, 3),
            phi_t: rand_mat(&mut rng, 3, 3),
            h_b: DVector::from_fn(3, |_, _| complex_gaussian(&mut rng)),
        };
        assert_eq!(beamspace_channel_matrix(&full).unwrap().adof, 3);
    }

    proptest! {
        #[test]
        fn pattern_round_trip(m in 2usize..7, seed in 0u64..1000) {
            let b = orthonormal_basis(&EsparGeometry::new(m, 0.25).unwrap(), 16 * m).unwrap();
            let mut rng = substream(seed, 0);
            let i = DVector::from_fn(m, |_, _| complex_gaussian(&mut rng));
            let w = pattern_weights(&i, &b).unwrap();
            for &theta in b.grid.iter().step_by(5) {
                let direct = (i.transpose() * steering_vector(b.geometry(), theta))[(0, 0)];
                prop_assert!((radiation_pattern(&w, &b, theta) - direct).norm() < 1e-8);
            }
        }

        #[test]
        fn pattern_linearity(seed in 0u64..1000) {
            let b = orthonormal_basis(&EsparGeometry::new(4, 0.3).unwrap(), 64).unwrap();
            let mut rng = substream(seed, 1);
            let w1 = DVector::from_fn(4, |_, _| complex_gaussian(&mut rng));
            let w2 = DVector::from_fn(4, |_, _| complex_gaussian(&mut rng));
            for _ in 0..16 {
                let t = rng.random::<f64>() * 2.0 * PI;
                let lhs = radiation_pattern(&(&w1 + &w2), &b, t);
                let rhs = radiation_pattern(&w1, &b, t) + radiation_pattern(&w2, &b, t);
                prop_assert!((lhs - rhs).norm() < 1e-12);
            }
        }

        #[test]
        fn currents_scale_linearly(x1 in -200.0f64..200.0, x2 in -200.0f64..200.0, s in 0.1f64..10.0) {
            let y = DMatrix::from_fn(3, 3, |r, c| if r == c { Complex64::new(0.02, 0.01) } else { Complex64::new(0.001, -0.002) });
            let base = espar_currents(&y, &[x1, x2], Complex64::new(1.0, 0.0)).unwrap();
            let scaled = espar_currents(&y, &[x1, x2], Complex64::new(s, 0.0)).unwrap();
            prop_assert!((scaled.current - base.current * Complex64::new(s, 0.0)).norm() < 1e-9 * s);
        }

        #[test]
        fn adof_bounded(mr in 1usize..6, mt in 1usize..6, q in 1usize..8, seed in 0u64..10_000) {
            let mut rng = substream(seed, 2);
            let ch = BeamspaceChannel {
                phi_r: DMatrix::from_fn(mr, q, |_, _| complex_gaussian(&mut rng)),
                phi_t: DMatrix::from_fn(mt, q, |_, _| complex_gaussian(&mut rng)),
                h_b: DVector::from_fn(q, |_, _| complex_gaussian(&mut rng)),
            };
            prop_assert!(beamspace_channel_matrix(&ch).unwrap().adof <= mr.min(mt).min(q));
        }
    }
}
