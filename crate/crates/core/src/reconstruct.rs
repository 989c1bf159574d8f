//! Cat-qubit logical states: trace distance, the orthonormalized coherent
//! state basis, projection, Bloch vectors and reconstruction from Wigner maps.

use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt, TerminationReason};
use nalgebra::{DMatrix, DVector, Dyn, Matrix2, Owned, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{coherent_state_with, DensityMatrix, Guard};
use crate::scalar::{cr, Real, C};
use crate::wigner::{wigner_laguerre, WignerMap};

/// `½ Σ|λ_i|` over the eigenvalues of the Hermitian difference.
pub fn trace_distance<T: Real>(a: &DensityMatrix<T>, b: &DensityMatrix<T>) -> Result<T> {
    if a.dims() != b.dims() {
        return Err(Error::DimensionMismatch(format!(
            "trace distance between dims {:?} and {:?}",
            a.dims(),
            b.dims()
        )));
    }
    let d = a.matrix() - b.matrix();
    let h = (&d + d.adjoint()).map(|z| z * cr(T::lit(0.5)));
    let s = SymmetricEigen::new(h)
        .eigenvalues
        .iter()
        .fold(T::zero(), |acc, l| acc + l.abs());
    let t = s * T::lit(0.5);
    Ok(if t > T::one() { T::one() } else { t })
}

type M2 = Matrix2<C<f64>>;

fn pauli(k: usize) -> M2 {
    let z = C::new(0.0, 0.0);
    let one = C::new(1.0, 0.0);
    let i = C::new(0.0, 1.0);
    match k {
        0 => M2::new(one, z, z, one),
        1 => M2::new(z, one, one, z),
        2 => M2::new(z, -i, i, z),
        _ => M2::new(one, z, z, -one),
    }
}

/// Symmetrically orthonormalized `{|α⟩, |−α⟩}` in a truncated Fock space.
///
/// The even and odd cats are `(e₊ ± e₋)/√2`, so `σ_x` eigenstates are cats
/// and `σ_z` is diagonal in the coherent-state basis.
#[derive(Clone, Debug)]
pub struct LogicalBasis {
    alpha: C<f64>,
    /// Columns `e₊ ≈ |α⟩`, `e₋ ≈ |−α⟩`.
    vectors: DMatrix<C<f64>>,
}

impl LogicalBasis {
    pub fn new(alpha: C<f64>, dim: usize) -> Result<Self> {
        if alpha.norm() < 1e-3 {
            return Err(Error::InvalidParameter("logical basis needs alpha != 0".into()));
        }
        let p = coherent_state_with::<f64>(dim, alpha, Guard::Enforced)?;
        let m = coherent_state_with::<f64>(dim, -alpha, Guard::Enforced)?;
        let s = p.inner(&m).re;
        let a = 1.0 / (1.0 + s).sqrt();
        let b = 1.0 / (1.0 - s).sqrt();
        let (u, v) = ((a + b) / 2.0, (a - b) / 2.0);
        let ep = p.amplitudes() * C::new(u, 0.0) + m.amplitudes() * C::new(v, 0.0);
        let em = p.amplitudes() * C::new(v, 0.0) + m.amplitudes() * C::new(u, 0.0);
        let mut vectors = DMatrix::zeros(dim, 2);
        vectors.set_column(0, &ep);
        vectors.set_column(1, &em);
        Ok(Self { alpha, vectors })
    }

    pub fn alpha(&self) -> C<f64> {
        self.alpha
    }

    pub fn dim(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn vectors(&self) -> &DMatrix<C<f64>> {
        &self.vectors
    }

    /// `V σ V†` as a Fock-space matrix; `k = 0` gives the subspace projector.
    pub fn logical_operator(&self, k: usize) -> DMatrix<C<f64>> {
        let s = pauli(k);
        let sd = DMatrix::from_fn(2, 2, |i, j| s[(i, j)]);
        &self.vectors * sd * self.vectors.adjoint()
    }

    /// Compresses `rho` onto the logical subspace; also returns the weight
    /// `Tr(Πρ)` captured by the subspace.
    pub fn project(&self, rho: &DensityMatrix<f64>) -> Result<(LogicalState, f64)> {
        if rho.dims() != [self.dim()] {
            return Err(Error::DimensionMismatch(format!(
                "state dims {:?} vs logical basis dim {}",
                rho.dims(),
                self.dim()
            )));
        }
        let r = self.vectors.adjoint() * rho.matrix() * &self.vectors;
        let w = (r[(0, 0)] + r[(1, 1)]).re;
        if w <= 1e-12 {
            return Err(Error::InvalidParameter("state has no weight in the logical subspace".into()));
        }
        let m = M2::new(r[(0, 0)], r[(0, 1)], r[(1, 0)], r[(1, 1)]) / C::new(w, 0.0);
        let h = (m + m.adjoint()) * C::new(0.5, 0.0);
        Ok((
            LogicalState {
                alpha: self.alpha,
                rho_logical: h,
            },
            w,
        ))
    }

    /// `V ρ_L V†`.
    pub fn embed(&self, state: &LogicalState) -> Result<DensityMatrix<f64>> {
        let r = DMatrix::from_fn(2, 2, |i, j| state.rho_logical[(i, j)]);
        DensityMatrix::from_matrix(vec![self.dim()], &self.vectors * r * self.vectors.adjoint())
    }
}

/// 2×2 density matrix in the orthonormalized `{|α⟩, |−α⟩}` basis.
#[derive(Clone, Debug, PartialEq)]
pub struct LogicalState {
    pub alpha: C<f64>,
    pub rho_logical: M2,
}

#[derive(Serialize, Deserialize)]
struct LogicalStateJson {
    alpha: [f64; 2],
    rho_re: [[f64; 2]; 2],
    rho_im: [[f64; 2]; 2],
    bloch: [f64; 3],
}

impl LogicalState {
    pub fn new(alpha: C<f64>, rho_logical: M2) -> Result<Self> {
        let s = Self { alpha, rho_logical };
        s.validate()?;
        Ok(s)
    }

    /// `(I + xσ_x + yσ_y + zσ_z)/2`.
    pub fn from_bloch(alpha: C<f64>, r: [f64; 3]) -> Result<Self> {
        let mut m = pauli(0);
        for k in 0..3 {
            m += pauli(k + 1) * C::new(r[k], 0.0);
        }
        Self::new(alpha, m * C::new(0.5, 0.0))
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.rho_logical;
        let tr = (m[(0, 0)] + m[(1, 1)]).re;
        if (tr - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidParameter(format!("logical trace {tr}")));
        }
        if (m - m.adjoint()).camax() > 1e-8 {
            return Err(Error::InvalidParameter("logical state not Hermitian".into()));
        }
        let r = bloch_vector(self);
        let norm = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
        if norm > 1.0 + 2e-8 {
            return Err(Error::InvalidParameter(format!("negative eigenvalue, |r| = {norm}")));
        }
        Ok(())
    }

    pub fn to_json_string(&self) -> Result<String> {
        let m = &self.rho_logical;
        let j = LogicalStateJson {
            alpha: [self.alpha.re, self.alpha.im],
            rho_re: [[m[(0, 0)].re, m[(0, 1)].re], [m[(1, 0)].re, m[(1, 1)].re]],
            rho_im: [[m[(0, 0)].im, m[(0, 1)].im], [m[(1, 0)].im, m[(1, 1)].im]],
            bloch: bloch_vector(self),
        };
        Ok(serde_json::to_string_pretty(&j)?)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let j: LogicalStateJson = serde_json::from_str(s)?;
        let e = |i: usize, k: usize| C::new(j.rho_re[i][k], j.rho_im[i][k]);
        Self::new(C::new(j.alpha[0], j.alpha[1]), M2::new(e(0, 0), e(0, 1), e(1, 0), e(1, 1)))
    }
}

/// `(⟨σ_x⟩, ⟨σ_y⟩, ⟨σ_z⟩)` of a logical state.
pub fn bloch_vector(state: &LogicalState) -> [f64; 3] {
    let m = &state.rho_logical;
    [1, 2, 3].map(|k| (m * pauli(k)).trace().re)
}

/// Logical Bloch vector of a Fock-space state, after projection.
pub fn logical_bloch(rho: &DensityMatrix<f64>, alpha: C<f64>) -> Result<[f64; 3]> {
    let basis = LogicalBasis::new(alpha, rho.dim())?;
    Ok(bloch_vector(&basis.project(rho)?.0))
}

/// Least-squares fit of the logical Bloch vector to Wigner data, with
/// `ρ = TT†/Tr(TT†)` and `T` lower triangular to keep the estimate physical.
struct MleProblem {
    /// Wigner functions of `Vσ_kV†`, k = 0..4, one column each.
    basis_w: DMatrix<f64>,
    data: DVector<f64>,
    t: DVector<f64>,
}

impl MleProblem {
    fn bloch_of(t: &DVector<f64>) -> [f64; 3] {
        let (t0, t1, t2, t3) = (t[0], t[1], t[2], t[3]);
        let r00 = t0 * t0;
        let r11 = t1 * t1 + t2 * t2 + t3 * t3;
        let tr = (r00 + r11).max(1e-300);
        // ρ₀₁ = t0 (t2 − i t3)
        [2.0 * t0 * t2 / tr, 2.0 * t0 * t3 / tr, (r00 - r11) / tr]
    }

    fn residuals_at(&self, t: &DVector<f64>) -> DVector<f64> {
        let r = Self::bloch_of(t);
        let coef = DVector::from_vec(vec![0.5, 0.5 * r[0], 0.5 * r[1], 0.5 * r[2]]);
        &self.basis_w * coef - &self.data
    }
}

impl LeastSquaresProblem<f64, Dyn, Dyn> for MleProblem {
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, Dyn>;
    type ParameterStorage = Owned<f64, Dyn>;

    fn set_params(&mut self, x: &DVector<f64>) {
        self.t.copy_from(x);
    }

    fn params(&self) -> DVector<f64> {
        self.t.clone()
    }

    fn residuals(&self) -> Option<DVector<f64>> {
        Some(self.residuals_at(&self.t))
    }

    fn jacobian(&self) -> Option<DMatrix<f64>> {
        let n = self.data.len();
        let mut j = DMatrix::zeros(n, 4);
        for k in 0..4 {
            let h = 1e-7 * self.t[k].abs().max(1e-3);
            let mut tp = self.t.clone();
            let mut tm = self.t.clone();
            tp[k] += h;
            tm[k] -= h;
            let d = (self.residuals_at(&tp) - self.residuals_at(&tm)) / (2.0 * h);
            j.set_column(k, &d);
        }
        Some(j)
    }
}

fn map_dim(alpha: C<f64>) -> usize {
    crate::fock::required_dim(alpha.norm() + 2.0).max(10)
}

/// Maximum-likelihood logical state for a Wigner map, under a Gaussian
/// likelihood with uniform noise (least squares).
pub fn mle_logical(wmap: &WignerMap, alpha: C<f64>) -> Result<LogicalState> {
    if let Ok(est) = estimate_alpha_from_map(wmap) {
        let rel = (est.norm() - alpha.norm()).abs() / alpha.norm();
        if rel > 0.05 {
            log::warn!("alpha {alpha} differs from lobe positions ({est}) by {:.1}%", rel * 100.0);
        }
    }
    let basis = LogicalBasis::new(alpha, map_dim(alpha))?;
    let grid = wmap.grid();
    let pts = grid.points();
    let mut basis_w = DMatrix::zeros(pts.len(), 4);
    for k in 0..4 {
        let op = basis.logical_operator(k);
        for (i, &b) in pts.iter().enumerate() {
            basis_w[(i, k)] = wigner_laguerre(&op, b);
        }
    }
    let data = DVector::from_column_slice(&wmap.values);

    // Unconstrained linear solution for (x, y, z), pulled into the ball.
    let a = basis_w.columns(1, 3) * 0.5;
    let rhs = &data - basis_w.column(0) * 0.5;
    let svd = a.clone().svd(true, true);
    let lin = svd
        .solve(&rhs, 1e-12)
        .map_err(|e| Error::InvalidParameter(format!("degenerate Wigner basis: {e}")))?;
    let mut r = [lin[0], lin[1], lin[2]];
    let norm = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
    if norm > 1.0 {
        r = r.map(|v| v / norm * (1.0 - 1e-9));
    }
    let r00 = ((1.0 + r[2]) / 2.0).max(1e-8);
    let t0 = r00.sqrt();
    let (t2, t3) = (r[0] / 2.0 / t0, r[1] / 2.0 / t0);
    let t1 = ((1.0 - r[2]) / 2.0 - t2 * t2 - t3 * t3).max(0.0).sqrt();
    let init = DVector::from_vec(vec![t0, t1, t2, t3]);

    let problem = MleProblem {
        basis_w,
        data,
        t: init.clone(),
    };
    let start_cost = problem.residuals_at(&init).norm_squared();
    let (solved, report) = LevenbergMarquardt::new().with_patience(200).minimize(problem);
    let end_cost = solved.residuals_at(&solved.t).norm_squared();
    let failed = matches!(
        report.termination,
        TerminationReason::Numerical(_) | TerminationReason::User(_)
    );
    if failed || !(report.termination.was_successful() || end_cost <= start_cost) {
        return Err(Error::NonConvergence {
            iterations: report.number_of_evaluations,
            residual: end_cost.sqrt(),
        });
    }
    let t = if end_cost <= start_cost { solved.t } else { init };
    LogicalState::from_bloch(alpha, MleProblem::bloch_of(&t))
}

/// Separable Gaussian smoothing of a map, `σ` in phase-space units.
fn smooth(wmap: &WignerMap, sigma: f64) -> Vec<f64> {
    let (ny, nx) = wmap.shape();
    let (dx, dy) = wmap.spacings();
    let kernel = |d: f64, n: usize| -> Vec<f64> {
        let half = ((3.0 * sigma / d).ceil() as usize).min(n);
        (0..=2 * half)
            .map(|k| {
                let x = (k as f64 - half as f64) * d;
                (-x * x / (2.0 * sigma * sigma)).exp()
            })
            .collect()
    };
    let kx = kernel(dx, nx);
    let ky = kernel(dy, ny);
    let hx = kx.len() / 2;
    let hy = ky.len() / 2;
    let mut tmp = vec![0.0; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            let mut s = 0.0;
            for (k, w) in kx.iter().enumerate() {
                let ii = i as i64 + k as i64 - hx as i64;
                if ii >= 0 && (ii as usize) < nx {
                    s += w * wmap.at(ii as usize, j);
                }
            }
            tmp[j * nx + i] = s;
        }
    }
    let mut out = vec![0.0; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            let mut s = 0.0;
            for (k, w) in ky.iter().enumerate() {
                let jj = j as i64 + k as i64 - hy as i64;
                if jj >= 0 && (jj as usize) < ny {
                    s += w * tmp[jj as usize * nx + i];
                }
            }
            out[j * nx + i] = s;
        }
    }
    out
}

/// Positions of the two coherent lobes of a cat-like map.
///
/// Interference fringes are removed by Gaussian smoothing (width 0.5, which
/// suppresses a fringe of period `π/(2|α|)` by at least `e^{−8}` for
/// `|α| ≥ 2`); the lobe centers are the weighted centroids of the smoothed
/// map around its two highest maxima.
pub fn lobe_centers(wmap: &WignerMap) -> Result<(C<f64>, C<f64>)> {
    let sm = smooth(wmap, 0.5);
    let smap = WignerMap {
        values: sm.clone(),
        ..wmap.clone()
    };
    let peaks: Vec<_> = smap.local_maxima().into_iter().filter(|p| p.2 > 0.0).collect();
    if peaks.len() < 2 || peaks[1].2 < 0.25 * peaks[0].2 {
        return Err(Error::PeakDetection(format!(
            "expected two lobes, found {} significant maxima",
            peaks.iter().filter(|p| p.2 >= 0.25 * peaks[0].2).count()
        )));
    }
    let centroid = |i0: usize, j0: usize| -> C<f64> {
        let c0 = smap.beta(i0, j0);
        let (ny, nx) = smap.shape();
        let (mut w, mut acc) = (0.0, C::new(0.0, 0.0));
        for j in 0..ny {
            for i in 0..nx {
                let b = smap.beta(i, j);
                let v = sm[j * nx + i];
                if (b - c0).norm() <= 1.2 && v > 0.0 {
                    w += v;
                    acc += b * v;
                }
            }
        }
        acc / w
    };
    Ok((centroid(peaks[0].0, peaks[0].1), centroid(peaks[1].0, peaks[1].1)))
}

/// Half the separation of the two lobes, oriented with non-negative real
/// part (non-negative imaginary part on the imaginary axis).
pub fn estimate_alpha_from_map(wmap: &WignerMap) -> Result<C<f64>> {
    let (a, b) = lobe_centers(wmap)?;
    let half = (a - b) / 2.0;
    let flip = half.re < -1e-9 || (half.re.abs() <= 1e-9 && half.im < 0.0);
    Ok(if flip { -half } else { half })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{cat_state, coherent_state, fock_state, CatPhase, PureState};
    use crate::wigner::{wigner_map, WignerGrid};
    use proptest::prelude::*;

    fn random_density(seed: u64, dim: usize) -> DensityMatrix<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let g = DMatrix::from_fn(dim, dim, |_, _| C::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        let m = &g * g.adjoint();
        let tr = m.trace();
        DensityMatrix::new(vec![dim], m / tr).unwrap()
    }

    #[test]
    fn trace_distance_examples() {
        let rho = random_density(1, 4);
        assert!(trace_distance(&rho, &rho).unwrap() < 1e-14);
        let a = fock_state::<f64>(3, 0).unwrap().to_density();
        let b = fock_state::<f64>(3, 2).unwrap().to_density();
        assert!((trace_distance(&a, &b).unwrap() - 1.0).abs() < 1e-14);
        let q0 = fock_state::<f64>(2, 0).unwrap().to_density();
        let mixed = DensityMatrix::<f64>::mixed(&[2]);
        assert!((trace_distance(&q0, &mixed).unwrap() - 0.5).abs() < 1e-14);
        assert!(trace_distance(&q0, &a).is_err());
        let q32 = fock_state::<f32>(2, 0).unwrap().to_density();
        let m32 = DensityMatrix::<f32>::mixed(&[2]);
        assert!((trace_distance(&q32, &m32).unwrap() - 0.5).abs() < 1e-6);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn trace_distance_is_a_metric(s in any::<u64>()) {
            let a = random_density(s, 3);
            let b = random_density(s.wrapping_add(1), 3);
            let c = random_density(s.wrapping_add(2), 3);
            let ab = trace_distance(&a, &b).unwrap();
            let ba = trace_distance(&b, &a).unwrap();
            let bc = trace_distance(&b, &c).unwrap();
            let ac = trace_distance(&a, &c).unwrap();
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!(ac <= ab + bc + 1e-12);
            prop_assert!((0.0..=1.0).contains(&ab));
        }

        #[test]
        fn trace_distance_unitary_invariance(s in any::<u64>(), th in -3.0f64..3.0, re in -0.5f64..0.5) {
            let a = random_density(s, 4);
            let b = random_density(s ^ 0x5555, 4);
            let u = &crate::fock::displacement_op::<f64>(4, C::new(re, 0.3)).unwrap()
                * &crate::fock::rotation_op::<f64>(4, th).unwrap();
            let before = trace_distance(&a, &b).unwrap();
            let after = trace_distance(&a.conjugate(&u), &b.conjugate(&u)).unwrap();
            prop_assert!((before - after).abs() < 1e-10);
        }

        #[test]
        fn bloch_norm_bounded(x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0) {
            let n = (x * x + y * y + z * z).sqrt().max(1.0);
            let s = LogicalState::from_bloch(C::new(2.0, 0.0), [x / n, y / n, z / n]).unwrap();
            let r = bloch_vector(&s);
            prop_assert!((r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt() <= 1.0 + 1e-8);
        }
    }

    #[test]
    fn logical_paulis_close_under_products() {
        let basis = LogicalBasis::new(C::new(2.0, 0.0), 30).unwrap();
        let (x, y, z) = (basis.logical_operator(1), basis.logical_operator(2), basis.logical_operator(3));
        let i = C::new(0.0, 1.0);
        assert!((&x * &y - &z * i).camax() < 1e-12);
        assert!((&y * &z - &x * i).camax() < 1e-12);
        assert!((&z * &x - &y * i).camax() < 1e-12);
    }

    #[test]
    fn bloch_conventions() {
        let alpha = C::new(2.0, 0.0);
        let mixed = LogicalState::from_bloch(alpha, [0.0, 0.0, 0.0]).unwrap();
        assert_eq!(bloch_vector(&mixed), [0.0, 0.0, 0.0]);
        let coh = coherent_state::<f64>(30, alpha).unwrap().to_density();
        let r = logical_bloch(&coh, alpha).unwrap();
        // σ_x picks up the coherent-state overlap e^{−2|α|²}.
        assert!((r[2] - 1.0).abs() < 1e-6 && r[0].abs() < 1e-3);
        let cat = cat_state::<f64>(30, alpha, CatPhase::Plus).unwrap().to_density();
        assert!((logical_bloch(&cat, alpha).unwrap()[0] - 1.0).abs() < 1e-9);
        let cat_i = cat_state::<f64>(30, alpha, CatPhase::PlusI).unwrap().to_density();
        assert!((logical_bloch(&cat_i, alpha).unwrap()[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn json_round_trip() {
        let s = LogicalState::from_bloch(C::new(2.27, 0.0), [0.3, -0.2, 0.5]).unwrap();
        let back = LogicalState::from_json_str(&s.to_json_string().unwrap()).unwrap();
        assert!((back.rho_logical - s.rho_logical).camax() < 1e-15);
    }

    #[test]
    fn mle_recovers_coherent_and_cat() {
        let alpha = C::new(2.27, 0.0);
        let grid = WignerGrid::square(4.5, 41);
        let coh = coherent_state::<f64>(40, -alpha).unwrap().to_density();
        let est = mle_logical(&wigner_map(&coh, &grid).unwrap(), alpha).unwrap();
        let r = bloch_vector(&est);
        assert!(r[0].abs() < 1e-3 && r[1].abs() < 1e-3 && (r[2] + 1.0).abs() < 1e-3, "{r:?}");
        let cat = cat_state::<f64>(40, alpha, CatPhase::Plus).unwrap().to_density();
        let r = bloch_vector(&mle_logical(&wigner_map(&cat, &grid).unwrap(), alpha).unwrap());
        assert!((r[0] - 1.0).abs() < 1e-3 && r[1].abs() < 1e-3 && r[2].abs() < 1e-3, "{r:?}");
    }

    #[test]
    fn mle_projects_unphysical_data() {
        let alpha = C::new(2.0, 0.0);
        let grid = WignerGrid::square(4.0, 31);
        let cat = cat_state::<f64>(30, alpha, CatPhase::Minus).unwrap().to_density();
        let mut map = wigner_map(&cat, &grid).unwrap();
        for v in map.values.iter_mut() {
            *v *= 1.3;
        }
        let est = mle_logical(&map, alpha).unwrap();
        est.validate().unwrap();
        assert!(bloch_vector(&est)[0] < -0.99);
    }

    #[test]
    fn alpha_from_lobes() {
        let grid = WignerGrid::default_for(2.0);
        let cat = cat_state::<f64>(40, C::new(2.0, 0.0), CatPhase::Plus).unwrap().to_density();
        let a = estimate_alpha_from_map(&wigner_map(&cat, &grid).unwrap()).unwrap();
        assert!((a - C::new(2.0, 0.0)).norm() < 0.04, "{a}");
        let tilted = cat_state::<f64>(40, C::new(0.0, 2.27), CatPhase::Minus).unwrap().to_density();
        let a = estimate_alpha_from_map(&wigner_map(&tilted, &WignerGrid::default_for(2.27)).unwrap()).unwrap();
        assert!((a - C::new(0.0, 2.27)).norm() < 0.05, "{a}");
        let single = coherent_state::<f64>(40, C::new(0.0, 2.27)).unwrap().to_density();
        let r = estimate_alpha_from_map(&wigner_map(&single, &WignerGrid::default_for(2.27)).unwrap());
        assert!(matches!(r, Err(Error::PeakDetection(_))));
    }

    #[test]
    fn embed_inverts_project() {
        let alpha = C::new(2.0, 0.5);
        let basis = LogicalBasis::new(alpha, 36).unwrap();
        let s = LogicalState::from_bloch(alpha, [0.1, 0.6, -0.7]).unwrap();
        let rho = basis.embed(&s).unwrap();
        let (back, w) = basis.project(&rho).unwrap();
        assert!((w - 1.0).abs() < 1e-12);
        assert!((back.rho_logical - s.rho_logical).camax() < 1e-12);
        let psi: PureState<f64> = cat_state(36, alpha, CatPhase::MinusI).unwrap();
        let r = bloch_vector(&basis.project(&psi.to_density()).unwrap().0);
        assert!((r[1] + 1.0).abs() < 1e-6);
    }
}
