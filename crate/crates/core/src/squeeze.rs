//! Transient squeezing after the buffer drive is switched off: the
//! semiclassical amplitude equations, the short-time law for `r(t)`, the full
//! memory-buffer simulation and squeezing extraction from Wigner maps.

use std::fmt::Write as _;
use std::sync::Arc;

use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt, TerminationReason};
use nalgebra::storage::Owned;
use nalgebra::{DMatrix, DVector, Dyn, Matrix2, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::device::{build_bipartite_model, DeviceParams, FluxSetting};
use crate::error::{Error, Result};
use crate::fock::{annihilation_op, cat_state, fock_state, required_dim, CatPhase, DensityMatrix};
use crate::lindblad::{evolve, Coefficient, EvolveOptions, LindbladModel};
use crate::scalar::C;
use crate::wigner::{linspace, wigner_map, WignerGrid, WignerMap};

/// Variance of `Re β` for vacuum, with `W(β) ∝ e^{−2|β|²}`.
pub const VACUUM_VARIANCE: f64 = 0.25;
/// Drive-on stabilization before the drive is switched off, in ns.
pub const DEFAULT_PRESTABILIZE_NS: f64 = 500.0;
pub const DEFAULT_BOOTSTRAP_SEED: u64 = 7;

const BOOTSTRAP_SAMPLES: usize = 40;
/// Fit window half-width, in standard deviations.
const WINDOW_SIGMAS: f64 = 2.5;
const WINDOW_ROUNDS: usize = 3;
/// Lobes must be further apart than the vacuum-width window.
const MIN_SEPARATION: f64 = WINDOW_SIGMAS * 0.5;
/// A fitted variance beyond this means the lobes have merged.
const MAX_VARIANCE: f64 = 4.0;
/// Buffer dimension during the drive-on stage, where the buffer stays near vacuum.
const PRESTABILIZE_BUFFER_DIM: usize = 4;
const SIM_DT: f64 = 0.5;
/// Halving the step may change `r` by at most this much.
const STEP_TOLERANCE: f64 = 1e-5;

/// Semiclassical memory and buffer amplitudes after the drive is switched off.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeTrace {
    pub times: Vec<f64>,
    pub m_amp: Vec<C<f64>>,
    pub gamma_amp: Vec<C<f64>>,
    pub r: Vec<f64>,
}

impl AmplitudeTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Columns `t, re_m, im_m, re_gamma, im_gamma, r`.
    pub fn to_csv_string(&self) -> String {
        let mut s = String::from("t,re_m,im_m,re_gamma,im_gamma,r\n");
        for k in 0..self.len() {
            let (m, g) = (self.m_amp[k], self.gamma_amp[k]);
            let _ = writeln!(s, "{},{},{},{},{},{}", self.times[k], m.re, m.im, g.re, g.im, self.r[k]);
        }
        s
    }
}

type Amps = [C<f64>; 3];

fn axpy(y: &Amps, k: &Amps, h: f64) -> Amps {
    [y[0] + k[0] * h, y[1] + k[1] * h, y[2] + k[2] * h]
}

fn amplitude_rk4(g2: f64, kappa_b: f64, alpha: f64, t_span: (f64, f64), steps: usize) -> AmplitudeTrace {
    // (m, γ, ∫γ)
    let f = |y: &Amps| -> Amps {
        let [m, g, _] = *y;
        [
            C::new(0.0, -2.0 * g2) * g * m.conj(),
            g * (-kappa_b / 2.0) + C::new(0.0, -g2) * m * m,
            g,
        ]
    };
    let h = (t_span.1 - t_span.0) / steps as f64;
    let r_of = |y: &Amps| (C::new(0.0, 2.0 * g2) * y[2]).re;
    let mut y: Amps = [C::new(alpha, 0.0), C::new(0.0, 0.0), C::new(0.0, 0.0)];
    let mut trace = AmplitudeTrace {
        times: Vec::with_capacity(steps + 1),
        m_amp: Vec::with_capacity(steps + 1),
        gamma_amp: Vec::with_capacity(steps + 1),
        r: Vec::with_capacity(steps + 1),
    };
    for k in 0..=steps {
        if k > 0 {
            let k1 = f(&y);
            let k2 = f(&axpy(&y, &k1, h / 2.0));
            let k3 = f(&axpy(&y, &k2, h / 2.0));
            let k4 = f(&axpy(&y, &k3, h));
            for i in 0..3 {
                y[i] += (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (h / 6.0);
            }
        }
        trace.times.push(t_span.0 + h * k as f64);
        trace.m_amp.push(y[0]);
        trace.gamma_amp.push(y[1]);
        trace.r.push(r_of(&y));
    }
    trace
}

/// RK4 integration of `dm/dt = −2ig₂γm*`, `dγ/dt = −(κ_b/2)γ − ig₂m²` from
/// `m = α`, `γ = 0`, with `r = 2ig₂∫γ`. Rates in rad/ns.
///
/// The run is repeated at `dt/2`; a change in `r` above 1e−5 is an error.
pub fn integrate_amplitudes(g2: f64, kappa_b: f64, alpha: f64, t_span: (f64, f64), dt: f64) -> Result<AmplitudeTrace> {
    for (name, v) in [("g2", g2), ("kappa_b", kappa_b)] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::InvalidParameter(format!("{name} must be finite and non-negative, got {v}")));
        }
    }
    if !alpha.is_finite() {
        return Err(Error::InvalidParameter(format!("alpha must be finite, got {alpha}")));
    }
    if !(t_span.1 > t_span.0) || !t_span.0.is_finite() || !t_span.1.is_finite() {
        return Err(Error::InvalidParameter(format!("empty time span {t_span:?}")));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    let steps = ((t_span.1 - t_span.0) / dt).ceil().max(1.0) as usize;
    let coarse = amplitude_rk4(g2, kappa_b, alpha, t_span, steps);
    let fine = amplitude_rk4(g2, kappa_b, alpha, t_span, 2 * steps);
    let change = coarse
        .r
        .iter()
        .enumerate()
        .map(|(k, r)| (r - fine.r[2 * k]).abs())
        .fold(0.0, f64::max);
    if change > STEP_TOLERANCE {
        return Err(Error::CoarseStep { change, dt });
    }
    Ok(coarse)
}

/// Short-time law `r(t) = g₂²α²t²(1 − κ_b t/6)`, rates in rad/ns.
pub fn r_taylor(g2: f64, kappa_b: f64, alpha: f64, t: f64) -> f64 {
    g2 * g2 * alpha * alpha * t * t * (1.0 - kappa_b * t / 6.0)
}

fn check_dims(alpha: C<f64>, dims: (usize, usize)) -> Result<()> {
    let a = alpha.norm();
    let need = required_dim(a).max((4.0 * a * a).ceil() as usize + 1);
    if dims.0 < need {
        return Err(Error::Truncation {
            what: "squeezed-cat memory".into(),
            required: need,
            dim: dims.0,
        });
    }
    if dims.1 < 5 {
        return Err(Error::Truncation {
            what: "squeezed-cat buffer".into(),
            required: 5,
            dim: dims.1,
        });
    }
    Ok(())
}

fn quiet() -> EvolveOptions<f64> {
    EvolveOptions::new(SIM_DT).store_every(0).record_every(usize::MAX)
}

/// Zero-pads the buffer factor of a memory ⊗ buffer state.
fn pad_buffer(rho: &DensityMatrix<f64>, db_new: usize) -> Result<DensityMatrix<f64>> {
    let (dm, db) = (rho.dims()[0], rho.dims()[1]);
    let r = rho.matrix();
    let mut out = DMatrix::zeros(dm * db_new, dm * db_new);
    for m1 in 0..dm {
        for b1 in 0..db {
            for m2 in 0..dm {
                for b2 in 0..db {
                    out[(m1 * db_new + b1, m2 * db_new + b2)] = r[(m1 * db + b1, m2 * db + b2)];
                }
            }
        }
    }
    DensityMatrix::from_matrix(vec![dm, db_new], out)
}

/// `|C_α⁺⟩ ⊗ |0⟩` held under the stabilizing drive, just before switch-off.
fn prestabilized(params: &DeviceParams, alpha: C<f64>, dims: (usize, usize)) -> Result<DensityMatrix<f64>> {
    let db = PRESTABILIZE_BUFFER_DIM.min(dims.1);
    let eps = params.stabilizing_drive(alpha);
    let drive: Coefficient<f64> = Arc::new(move |_| eps);
    let model = build_bipartite_model(params, drive, (dims.0, db), FluxSetting::On)?;
    let rho0 = cat_state::<f64>(dims.0, alpha, CatPhase::Plus)?
        .to_density()
        .tensor(&fock_state::<f64>(db, 0)?.to_density());
    let held = evolve(&model, &rho0, (0.0, DEFAULT_PRESTABILIZE_NS), &quiet())?.final_state;
    pad_buffer(&held, dims.1)
}

fn drive_off_model(params: &DeviceParams, dims: (usize, usize)) -> Result<LindbladModel<f64>> {
    let off: Coefficient<f64> = Arc::new(|_| C::new(0.0, 0.0));
    build_bipartite_model(params, off, dims, FluxSetting::On)
}

/// Memory state `t_off` ns after the buffer drive is switched off, starting
/// from a stabilized `|C_α⁺⟩`. Flux stays on.
pub fn simulate_squeezed_cat(
    params: &DeviceParams,
    alpha: C<f64>,
    t_off: f64,
    dims: (usize, usize),
) -> Result<DensityMatrix<f64>> {
    Ok(drive_off_states(params, alpha, &[t_off], dims)?.remove(0).2)
}

/// Joint evolution after switch-off, sampled at ascending `t_offs`:
/// `(t_off, ⟨b⟩, memory state)`.
fn drive_off_states(
    params: &DeviceParams,
    alpha: C<f64>,
    t_offs: &[f64],
    dims: (usize, usize),
) -> Result<Vec<(f64, C<f64>, DensityMatrix<f64>)>> {
    check_dims(alpha, dims)?;
    if t_offs.is_empty() {
        return Err(Error::InvalidParameter("no switch-off times given".into()));
    }
    if t_offs.iter().any(|t| !(t.is_finite() && *t >= 0.0)) || t_offs.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidParameter(format!(
            "switch-off times must be non-negative and ascending, got {t_offs:?}"
        )));
    }
    let mut rho = prestabilized(params, alpha, dims)?;
    let model = drive_off_model(params, dims)?;
    let b = annihilation_op::<f64>(dims.1)?.embed(1, &[dims.0, dims.1])?;
    let mut t = 0.0;
    let mut out = Vec::with_capacity(t_offs.len());
    for &to in t_offs {
        if to > t {
            rho = evolve(&model, &rho, (t, to), &quiet())?.final_state;
            t = to;
        }
        out.push((to, rho.expect(&b), rho.partial_trace(0)?));
    }
    Ok(out)
}

/// Square grid with spacing 0.05 covering both lobes of a size-`α` cat.
pub fn squeeze_grid(alpha: C<f64>) -> WignerGrid {
    let half = alpha.norm() + 2.0;
    let n = (2.0 * half / 0.05).round() as usize + 1;
    let axis = linspace(-half, half, n);
    WignerGrid {
        re: axis.clone(),
        im: axis,
    }
}

/// Two-lobe Gaussian fit of a Wigner map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SqueezeFit {
    /// `10·log₁₀(σ²_vac/σ²_min)`.
    pub db: f64,
    /// Bootstrap standard deviation of `db`.
    pub uncertainty: f64,
    pub centers: [C<f64>; 2],
    pub amplitudes: [f64; 2],
    pub var_min: f64,
    pub var_max: f64,
    /// Direction of the squeezed axis from `Re β`, in (−π/2, π/2].
    pub angle: f64,
    pub rms_residual: f64,
}

impl SqueezeFit {
    pub fn uncertainty_product(&self) -> f64 {
        self.var_min * self.var_max
    }
}

fn db_from_variance(v: f64) -> f64 {
    10.0 * (VACUUM_VARIANCE / v).log10()
}

// Parameters: A₁, A₂, μ₁ (x, y), μ₂ (x, y), ln a, b, ln c with the shared
// inverse covariance L Lᵀ, L = [[a, 0], [b, c]].
const N_PARAMS: usize = 9;

#[derive(Clone)]
struct PeakProblem {
    xs: Vec<f64>,
    ys: Vec<f64>,
    data: DVector<f64>,
    p: DVector<f64>,
}

fn two_lobes(p: &DVector<f64>, x: f64, y: f64) -> f64 {
    let (a, b, c) = (p[6].exp(), p[7], p[8].exp());
    let mut s = 0.0;
    for k in 0..2 {
        let (dx, dy) = (x - p[2 + 2 * k], y - p[3 + 2 * k]);
        let u = a * dx + b * dy;
        let v = c * dy;
        s += p[k] * (-0.5 * (u * u + v * v)).exp();
    }
    s
}

impl PeakProblem {
    fn model(&self, p: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.xs.len(), self.xs.iter().zip(&self.ys).map(|(&x, &y)| two_lobes(p, x, y)))
    }

    fn residuals_at(&self, p: &DVector<f64>) -> DVector<f64> {
        self.model(p) - &self.data
    }
}

impl LeastSquaresProblem<f64, Dyn, Dyn> for PeakProblem {
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, Dyn>;
    type ParameterStorage = Owned<f64, Dyn>;

    fn set_params(&mut self, x: &DVector<f64>) {
        self.p.copy_from(x);
    }

    fn params(&self) -> DVector<f64> {
        self.p.clone()
    }

    fn residuals(&self) -> Option<DVector<f64>> {
        Some(self.residuals_at(&self.p))
    }

    fn jacobian(&self) -> Option<DMatrix<f64>> {
        let mut j = DMatrix::zeros(self.data.len(), N_PARAMS);
        for k in 0..N_PARAMS {
            let h = 1e-7 * self.p[k].abs().max(1e-2);
            let mut pp = self.p.clone();
            let mut pm = self.p.clone();
            pp[k] += h;
            pm[k] -= h;
            j.set_column(k, &((self.model(&pp) - self.model(&pm)) / (2.0 * h)));
        }
        Some(j)
    }
}

fn solve(problem: PeakProblem) -> Result<DVector<f64>> {
    let start = problem.residuals_at(&problem.p).norm_squared();
    let init = problem.p.clone();
    let (solved, report) = LevenbergMarquardt::new().with_patience(200).minimize(problem);
    let end = solved.residuals_at(&solved.p).norm_squared();
    let broken = matches!(
        report.termination,
        TerminationReason::Numerical(_) | TerminationReason::User(_)
    );
    if broken || !solved.p.iter().all(|v| v.is_finite()) || !(report.termination.was_successful() || end <= start) {
        return Err(Error::NonConvergence {
            iterations: report.number_of_evaluations,
            residual: end.sqrt(),
        });
    }
    Ok(if end <= start { solved.p } else { init })
}

/// Covariance eigen-decomposition: `(var_min, var_max, angle of the minor axis)`.
fn covariance_axes(p: &DVector<f64>) -> Result<(f64, f64, f64)> {
    let cov = inverse_covariance(p)
        .try_inverse()
        .ok_or_else(|| Error::NonConvergence { iterations: 0, residual: f64::NAN })?;
    let eig = SymmetricEigen::new(cov);
    let (imin, imax) = if eig.eigenvalues[0] <= eig.eigenvalues[1] { (0, 1) } else { (1, 0) };
    let v = eig.eigenvectors.column(imin);
    let mut angle = v[1].atan2(v[0]);
    if angle <= -std::f64::consts::FRAC_PI_2 {
        angle += std::f64::consts::PI;
    } else if angle > std::f64::consts::FRAC_PI_2 {
        angle -= std::f64::consts::PI;
    }
    Ok((eig.eigenvalues[imin], eig.eigenvalues[imax], angle))
}

/// The two lobes: the most distant pair among local maxima above a quarter of
/// the highest. A cat's central fringe can outrank the lobes themselves.
fn select_lobes(wmap: &WignerMap) -> Result<[C<f64>; 2]> {
    let maxima = wmap.local_maxima();
    let top = maxima
        .first()
        .map(|m| m.2)
        .filter(|v| *v > 0.0)
        .ok_or_else(|| Error::PeakDetection("map has no positive local maximum".into()))?;
    let cands: Vec<C<f64>> = maxima
        .iter()
        .filter(|m| m.2 >= 0.25 * top)
        .map(|m| wmap.beta(m.0, m.1))
        .collect();
    let mut best: Option<(f64, [C<f64>; 2])> = None;
    for i in 0..cands.len() {
        for j in i + 1..cands.len() {
            let d = (cands[i] - cands[j]).norm();
            if best.map_or(true, |(bd, _)| d > bd) {
                best = Some((d, [cands[i], cands[j]]));
            }
        }
    }
    match best {
        Some((d, pair)) if d > MIN_SEPARATION => Ok(pair),
        _ => Err(Error::PeakDetection(format!(
            "need two separated peaks, found {} candidate(s)",
            cands.len()
        ))),
    }
}

/// Second-moment start point for the fit.
fn initial_params(xs: &[f64], ys: &[f64], data: &DVector<f64>, owner: &[usize], lobes: &[C<f64>; 2]) -> DVector<f64> {
    let mut p = DVector::zeros(N_PARAMS);
    let mut cov = [0.0; 3];
    for k in 0..2 {
        let (mut w, mut mx, mut my) = (0.0, 0.0, 0.0);
        let mut peak: f64 = 0.0;
        for i in (0..xs.len()).filter(|&i| owner[i] == k) {
            let v = data[i].max(0.0);
            w += v;
            mx += v * xs[i];
            my += v * ys[i];
            peak = peak.max(data[i]);
        }
        let (mx, my) = if w > 0.0 { (mx / w, my / w) } else { (lobes[k].re, lobes[k].im) };
        let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
        for i in (0..xs.len()).filter(|&i| owner[i] == k) {
            let v = data[i].max(0.0);
            let (dx, dy) = (xs[i] - mx, ys[i] - my);
            sxx += v * dx * dx;
            sxy += v * dx * dy;
            syy += v * dy * dy;
        }
        if w > 0.0 {
            cov[0] += 0.5 * sxx / w;
            cov[1] += 0.5 * sxy / w;
            cov[2] += 0.5 * syy / w;
        }
        p[k] = peak;
        p[2 + 2 * k] = mx;
        p[3 + 2 * k] = my;
    }
    let inv = Matrix2::new(cov[0], cov[1], cov[1], cov[2]).try_inverse();
    let (a, b, c) = match inv {
        Some(m) if m[(0, 0)] > 0.0 && m[(1, 1)] - m[(0, 1)] * m[(0, 1)] / m[(0, 0)] > 0.0 => {
            let a = m[(0, 0)].sqrt();
            let b = m[(0, 1)] / a;
            (a, b, (m[(1, 1)] - b * b).sqrt())
        }
        _ => (2.0, 0.0, 2.0),
    };
    p[6] = a.ln();
    p[7] = b;
    p[8] = c.ln();
    p
}

struct Window {
    xs: Vec<f64>,
    ys: Vec<f64>,
    data: DVector<f64>,
    owner: Vec<usize>,
}

/// Pixels within Mahalanobis distance 2.5 of the nearer center, under the
/// inverse covariance `inv`.
fn window(wmap: &WignerMap, centers: &[C<f64>; 2], inv: &Matrix2<f64>) -> Window {
    let (nx, ny) = (wmap.grid_re.len(), wmap.grid_im.len());
    let (mut xs, mut ys, mut vals, mut owner) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for j in 0..ny {
        for i in 0..nx {
            let beta = wmap.beta(i, j);
            let d: Vec<f64> = centers
                .iter()
                .map(|c| {
                    let (dx, dy) = (beta.re - c.re, beta.im - c.im);
                    inv[(0, 0)] * dx * dx + 2.0 * inv[(0, 1)] * dx * dy + inv[(1, 1)] * dy * dy
                })
                .collect();
            let k = if d[0] <= d[1] { 0 } else { 1 };
            if d[k] <= WINDOW_SIGMAS * WINDOW_SIGMAS {
                xs.push(beta.re);
                ys.push(beta.im);
                vals.push(wmap.at(i, j));
                owner.push(k);
            }
        }
    }
    Window {
        xs,
        ys,
        data: DVector::from_vec(vals),
        owner,
    }
}

fn inverse_covariance(p: &DVector<f64>) -> Matrix2<f64> {
    let (a, b, c) = (p[6].exp(), p[7], p[8].exp());
    Matrix2::new(a * a, a * b, a * b, b * b + c * c)
}

/// Fits the two lobes of a Wigner map with Gaussians sharing one covariance.
/// The window spans 2.5 standard deviations around each lobe: it starts from
/// the vacuum width and follows the fitted covariance for a few rounds. The
/// uncertainty is a residual bootstrap with the given seed.
pub fn fit_squeezed_peaks(wmap: &WignerMap, seed: u64) -> Result<SqueezeFit> {
    let lobes = select_lobes(wmap)?;
    let mut inv = Matrix2::identity() / VACUUM_VARIANCE;
    let mut centers = lobes;
    let mut fitted_params = None;
    for _ in 0..WINDOW_ROUNDS {
        let win = window(wmap, &centers, &inv);
        if win.xs.len() <= N_PARAMS {
            return Err(Error::PeakDetection(format!("only {} pixels inside the fit windows", win.xs.len())));
        }
        let p0 = match &fitted_params {
            Some((_, p)) => DVector::clone(p),
            None => initial_params(&win.xs, &win.ys, &win.data, &win.owner, &lobes),
        };
        let problem = PeakProblem {
            xs: win.xs,
            ys: win.ys,
            data: win.data,
            p: p0,
        };
        let best = solve(problem.clone())?;
        let (_, var_max, _) = covariance_axes(&best)?;
        if var_max > MAX_VARIANCE {
            return Err(Error::NonConvergence {
                iterations: 0,
                residual: var_max,
            });
        }
        inv = inverse_covariance(&best);
        centers = [C::new(best[2], best[3]), C::new(best[4], best[5])];
        fitted_params = Some((problem, best));
    }
    let (problem, best) = fitted_params.expect("at least one window round");
    let (var_min, var_max, angle) = covariance_axes(&best)?;

    let fitted = problem.model(&best);
    let resid = &problem.data - &fitted;
    let n = resid.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(BOOTSTRAP_SAMPLES);
    for _ in 0..BOOTSTRAP_SAMPLES {
        let data = DVector::from_fn(n, |i, _| fitted[i] + resid[rng.random_range(0..n)]);
        let trial = PeakProblem {
            data,
            p: best.clone(),
            ..problem.clone()
        };
        if let Ok((v, _, _)) = solve(trial).and_then(|p| covariance_axes(&p)) {
            samples.push(db_from_variance(v));
        }
    }
    let uncertainty = if samples.len() > 1 {
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        (samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (samples.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(SqueezeFit {
        db: db_from_variance(var_min),
        uncertainty,
        centers: [C::new(best[2], best[3]), C::new(best[4], best[5])],
        amplitudes: [best[0], best[1]],
        var_min,
        var_max,
        angle,
        rms_residual: (resid.norm_squared() / n as f64).sqrt(),
    })
}

/// `(dB, uncertainty)` with the default bootstrap seed.
pub fn extract_squeezing_db(wmap: &WignerMap) -> Result<(f64, f64)> {
    fit_squeezed_peaks(wmap, DEFAULT_BOOTSTRAP_SEED).map(|f| (f.db, f.uncertainty))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SqueezePoint {
    pub t_off: f64,
    pub buffer_mean: C<f64>,
    pub fit: Option<SqueezeFit>,
    pub failure: Option<String>,
}

/// Extracted squeezing against switch-off time.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SqueezeSweep {
    pub alpha: C<f64>,
    pub points: Vec<SqueezePoint>,
}

impl SqueezeSweep {
    /// Point with the largest extracted squeezing.
    pub fn peak(&self) -> Option<&SqueezePoint> {
        self.points
            .iter()
            .filter(|p| p.fit.is_some())
            .max_by(|a, b| {
                let (x, y) = (a.fit.as_ref().unwrap().db, b.fit.as_ref().unwrap().db);
                x.partial_cmp(&y).unwrap_or(std::cmp::Ordering::Equal)
            })
    }

    /// Columns `t_off_ns, db, uncertainty, var_min, var_max, angle, re_b, im_b`;
    /// failed fits leave the fit columns empty.
    pub fn to_csv_string(&self) -> String {
        let mut s = String::from("t_off_ns,db,uncertainty,var_min,var_max,angle,re_b,im_b\n");
        for p in &self.points {
            let b = p.buffer_mean;
            match &p.fit {
                Some(f) => {
                    let _ = writeln!(
                        s,
                        "{},{},{},{},{},{},{},{}",
                        p.t_off, f.db, f.uncertainty, f.var_min, f.var_max, f.angle, b.re, b.im
                    );
                }
                None => {
                    let _ = writeln!(s, "{},,,,,,{},{}", p.t_off, b.re, b.im);
                }
            }
        }
        s
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Simulates switch-off once and fits the memory Wigner map at each of the
/// ascending `t_offs`. Fits run in parallel; a failed fit is recorded, not fatal.
pub fn squeeze_sweep(
    params: &DeviceParams,
    alpha: C<f64>,
    t_offs: &[f64],
    dims: (usize, usize),
    seed: u64,
) -> Result<SqueezeSweep> {
    let states = drive_off_states(params, alpha, t_offs, dims)?;
    let grid = squeeze_grid(alpha);
    let points = states
        .into_par_iter()
        .map(|(t_off, buffer_mean, mem)| {
            let fit = wigner_map(&mem, &grid).and_then(|w| fit_squeezed_peaks(&w, seed));
            match fit {
                Ok(f) => SqueezePoint {
                    t_off,
                    buffer_mean,
                    fit: Some(f),
                    failure: None,
                },
                Err(e) => SqueezePoint {
                    t_off,
                    buffer_mean,
                    fit: None,
                    failure: Some(e.to_string()),
                },
            }
        })
        .collect();
    Ok(SqueezeSweep { alpha, points })
}


#[cfg(test)]
mod props {
    use super::*;
    use crate::device::mhz_to_rad_per_ns;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn taylor_law_holds_early(g2 in 4.0f64..7.0, kb in 35.0f64..60.0, alpha in 1.5f64..3.0) {
            let (g2, kb) = (mhz_to_rad_per_ns(g2), mhz_to_rad_per_ns(kb));
            let tr = integrate_amplitudes(g2, kb, alpha, (0.0, 0.5 / kb), 0.001).unwrap();
            for (t, r) in tr.times.iter().zip(&tr.r).skip(1) {
                let rel = (r - r_taylor(g2, kb, alpha, *t)).abs() / r;
                prop_assert!(rel <= 0.05, "t {t}: rel {rel}");
            }
        }
    }
}
