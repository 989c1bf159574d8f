//! Wigner functions and simulated parity-based tomography.
//!
//! `W(β) = (2/π) Tr(D(β)† ρ D(β) P)`, bounded by ±2/π. Besides the exact
//! value, three readout chains are modelled: ideal parity, the Ramsey
//! sequence on a dispersively coupled transmon, and the Ramsey sequence
//! preceded by a two-photon deflation of the displaced state.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{DMatrix, Matrix2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::device::{build_reduced_model, DeviceParams, FluxSetting, ReducedOptions};
use crate::error::{Error, Result};
use crate::fock::{check_guard, displacement_op, displacement_op_with, fock_state, Guard, Operator, PureState};
use crate::lindblad::{evolve, EvolveOptions};
use crate::scalar::C;
use crate::fock::DensityMatrix;

type M2 = Matrix2<C<f64>>;

/// Readout chain used to produce a map.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Ideal,
    Ramsey,
    RamseyEnhanced,
}

/// Rectangular phase-space grid, `β = re + i·im`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WignerGrid {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![0.5 * (lo + hi)],
        _ => (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect(),
    }
}

impl WignerGrid {
    pub fn new(re: Vec<f64>, im: Vec<f64>) -> Result<Self> {
        if re.is_empty() || im.is_empty() {
            return Err(Error::InvalidParameter("grid axes must be non-empty".into()));
        }
        Ok(Self { re, im })
    }

    /// `n × n` grid over `[−half_width, half_width]²`.
    pub fn square(half_width: f64, n: usize) -> Self {
        Self {
            re: linspace(-half_width, half_width, n),
            im: linspace(-half_width, half_width, n),
        }
    }

    /// 101×101 over `±(|α| + 3)`.
    pub fn default_for(alpha: f64) -> Self {
        Self::square(alpha.abs() + 3.0, 101)
    }

    /// Cut along the imaginary axis: `β = i·y`, `y ∈ [lo, hi]`.
    pub fn imaginary_cut(lo: f64, hi: f64, n: usize) -> Self {
        Self {
            re: vec![0.0],
            im: linspace(lo, hi, n),
        }
    }

    pub fn len(&self) -> usize {
        self.re.len() * self.im.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Points in row-major order (rows follow `im`).
    pub fn points(&self) -> Vec<C<f64>> {
        let mut pts = Vec::with_capacity(self.len());
        for &y in &self.im {
            for &x in &self.re {
                pts.push(C::new(x, y));
            }
        }
        pts
    }

    pub fn max_abs(&self) -> f64 {
        self.points().iter().map(|b| b.norm()).fold(0.0, f64::max)
    }
}

/// Values of `W` on a grid; `values` is row-major with rows along `grid_im`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WignerMap {
    pub grid_re: Vec<f64>,
    pub grid_im: Vec<f64>,
    pub values: Vec<f64>,
    pub protocol_tag: Protocol,
}

impl WignerMap {
    pub fn from_values(grid: &WignerGrid, values: Vec<f64>, protocol: Protocol) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self {
            grid_re: grid.re.clone(),
            grid_im: grid.im.clone(),
            values,
            protocol_tag: protocol,
        })
    }

    pub fn grid(&self) -> WignerGrid {
        WignerGrid {
            re: self.grid_re.clone(),
            im: self.grid_im.clone(),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.grid_im.len(), self.grid_re.len())
    }

    /// `W` at re index `i`, im index `j`.
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.grid_re.len() + i]
    }

    pub fn beta(&self, i: usize, j: usize) -> C<f64> {
        C::new(self.grid_re[i], self.grid_im[j])
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    fn spacing(axis: &[f64]) -> f64 {
        if axis.len() < 2 {
            1.0
        } else {
            (axis[axis.len() - 1] - axis[0]) / (axis.len() - 1) as f64
        }
    }

    pub fn spacings(&self) -> (f64, f64) {
        (Self::spacing(&self.grid_re), Self::spacing(&self.grid_im))
    }

    /// Riemann sum `Σ W ΔRe ΔIm`.
    pub fn integral(&self) -> f64 {
        let (dx, dy) = self.spacings();
        self.values.iter().sum::<f64>() * dx * dy
    }

    /// Strict local maxima over the 8-neighbourhood, highest first.
    pub fn local_maxima(&self) -> Vec<(usize, usize, f64)> {
        let (ny, nx) = self.shape();
        let mut out = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                let v = self.at(i, j);
                let mut is_max = true;
                'nb: for dj in -1i64..=1 {
                    for di in -1i64..=1 {
                        if di == 0 && dj == 0 {
                            continue;
                        }
                        let (ii, jj) = (i as i64 + di, j as i64 + dj);
                        if ii < 0 || jj < 0 || ii >= nx as i64 || jj >= ny as i64 {
                            continue;
                        }
                        let w = self.at(ii as usize, jj as usize);
                        if w > v || (w == v && (jj, ii) < (j as i64, i as i64)) {
                            is_max = false;
                            break 'nb;
                        }
                    }
                }
                if is_max {
                    out.push((i, j, v));
                }
            }
        }
        out.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap_or(std::cmp::Ordering::Equal));
        out
    }

    /// CSV with columns `re,im,w`.
    pub fn to_csv_string(&self) -> String {
        let mut s = String::from("re,im,w\n");
        for (j, &y) in self.grid_im.iter().enumerate() {
            for (i, &x) in self.grid_re.iter().enumerate() {
                let _ = writeln!(s, "{x:.6},{y:.6},{:.10e}", self.at(i, j));
            }
        }
        s
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s)?;
        if m.values.len() != m.grid_re.len() * m.grid_im.len() {
            return Err(Error::DimensionMismatch("values do not match grid".into()));
        }
        Ok(m)
    }
}

/// `W(β)` of a single-mode state by the Laguerre recursion over matrix
/// elements; exact for the truncated state, `O(dim²)` per point.
pub fn wigner_point(rho: &DensityMatrix<f64>, beta: C<f64>) -> Result<f64> {
    if rho.dims().len() != 1 {
        return Err(Error::DimensionMismatch("Wigner function needs a single-mode state".into()));
    }
    Ok(wigner_laguerre(rho.matrix(), beta))
}

pub(crate) fn wigner_laguerre(rho: &DMatrix<C<f64>>, a: C<f64>) -> f64 {
    let m = rho.nrows();
    let mut wl: Vec<C<f64>> = vec![C::new(0.0, 0.0); m];
    wl[0] = C::new((-2.0 * a.norm_sqr()).exp() / PI, 0.0);
    let mut w = rho[(0, 0)].re * wl[0].re;
    for n in 1..m {
        wl[n] = a * wl[n - 1] * 2.0 / (n as f64).sqrt();
        w += 2.0 * (rho[(0, n)] * wl[n]).re;
    }
    let ac = a.conj();
    for mm in 1..m {
        let sm = (mm as f64).sqrt();
        let mut temp = wl[mm];
        wl[mm] = (ac * temp * 2.0 - wl[mm - 1] * sm) / sm;
        w += (rho[(mm, mm)] * wl[mm]).re;
        for n in mm + 1..m {
            let temp2 = (a * wl[n - 1] * 2.0 - temp * sm) / (n as f64).sqrt();
            temp = wl[n];
            wl[n] = temp2;
            w += 2.0 * (rho[(mm, n)] * wl[n]).re;
        }
    }
    2.0 * w
}

/// Exact `W` on every grid point, evaluated in parallel.
pub fn wigner_map(rho: &DensityMatrix<f64>, grid: &WignerGrid) -> Result<WignerMap> {
    if rho.dims().len() != 1 {
        return Err(Error::DimensionMismatch("Wigner function needs a single-mode state".into()));
    }
    let m = rho.matrix();
    let values: Vec<f64> = grid.points().par_iter().map(|&b| wigner_laguerre(m, b)).collect();
    WignerMap::from_values(grid, values, Protocol::Ideal)
}

/// Settings of the simulated parity readout.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReadoutSettings {
    /// Deflate the displaced state before the Ramsey sequence.
    pub enhanced: bool,
    /// Deflation duration at α = 0, in ns.
    pub deflation_ns: f64,
    /// Constant offset added to both raw Ramsey signals.
    pub offset: f64,
}

impl ReadoutSettings {
    pub fn ramsey() -> Self {
        Self {
            enhanced: false,
            deflation_ns: 300.0,
            offset: 0.0,
        }
    }

    pub fn enhanced() -> Self {
        Self {
            enhanced: true,
            ..Self::ramsey()
        }
    }
}

/// First π/2 pulse, `|g⟩ → (|g⟩ + |e⟩)/√2`.
fn first_pulse() -> M2 {
    let s = 1.0 / 2f64.sqrt();
    M2::new(C::new(s, 0.0), C::new(-s, 0.0), C::new(s, 0.0), C::new(s, 0.0))
}

/// Second pulse `(1/√2)[[1, ∓1], [±1, 1]]`.
fn second_pulse(sign: f64) -> M2 {
    let s = 1.0 / 2f64.sqrt();
    M2::new(C::new(s, 0.0), C::new(-sign * s, 0.0), C::new(sign * s, 0.0), C::new(s, 0.0))
}

fn excited_projector() -> M2 {
    M2::new(C::new(0.0, 0.0), C::new(0.0, 0.0), C::new(0.0, 0.0), C::new(1.0, 0.0))
}

/// Effective measured observable `U±†|e⟩⟨e|U±` for the two interleaved
/// readouts.
fn readout_observable(sign: f64) -> M2 {
    let u = second_pulse(sign);
    u.adjoint() * excited_projector() * u
}

fn prepared_qubit() -> M2 {
    let u = first_pulse();
    let g = M2::new(C::new(1.0, 0.0), C::new(0.0, 0.0), C::new(0.0, 0.0), C::new(0.0, 0.0));
    u * g * u.adjoint()
}

/// Per-Fock-level response of the readout chain.
///
/// Every model in the chain is invariant under phase rotations of the memory,
/// so Fock-diagonal memory blocks evolve on their own and the raw signals are
/// linear in the populations of the displaced state:
/// `S± = Σ_n s±_n ⟨n|D(β)†ρD(β)|n⟩`.
#[derive(Clone, Debug)]
pub struct ParityReadout {
    settings: ReadoutSettings,
    s_plus: Vec<f64>,
    s_minus: Vec<f64>,
    contrast: f64,
}

impl ParityReadout {
    /// Computes the response for Fock levels `0..levels`.
    pub fn new(params: &DeviceParams, settings: ReadoutSettings, levels: usize) -> Result<Self> {
        params.validate()?;
        if levels < 2 {
            return Err(Error::InvalidDimension(format!("readout needs at least 2 levels, got {levels}")));
        }
        let t_parity = params.parity_time()?;
        let mut s_plus = ramsey_response(params, levels, t_parity, 1.0);
        let mut s_minus = ramsey_response(params, levels, t_parity, -1.0);
        if settings.enhanced {
            let map = deflation_population_map(params, levels, settings.deflation_ns);
            s_plus = pull_back(&map, &s_plus);
            s_minus = pull_back(&map, &s_minus);
        }
        let contrast = s_plus[0] - s_minus[0];
        if contrast.abs() < 1e-6 {
            return Err(Error::InvalidParameter("readout contrast vanishes".into()));
        }
        Ok(Self {
            settings,
            s_plus,
            s_minus,
            contrast,
        })
    }

    pub fn levels(&self) -> usize {
        self.s_plus.len()
    }

    /// Vacuum contrast used to normalize the estimate.
    pub fn contrast(&self) -> f64 {
        self.contrast
    }

    /// Raw signals `(S₊, S₋)` including the configured offset.
    pub fn signals_from_populations(&self, pops: &[f64]) -> Result<(f64, f64)> {
        if pops.len() > self.levels() {
            return Err(Error::Truncation {
                what: "parity readout response".into(),
                required: pops.len(),
                dim: self.levels(),
            });
        }
        let sp: f64 = pops.iter().zip(&self.s_plus).map(|(p, s)| p * s).sum();
        let sm: f64 = pops.iter().zip(&self.s_minus).map(|(p, s)| p * s).sum();
        Ok((sp + self.settings.offset, sm + self.settings.offset))
    }

    /// Parity estimate `(S₊ − S₋)/C` from raw signals.
    pub fn estimate(&self, s_plus: f64, s_minus: f64) -> f64 {
        (s_plus - s_minus) / self.contrast
    }

    /// Estimated `⟨P⟩` of `D(−β) ρ D(−β)†`.
    pub fn measure(&self, rho: &DensityMatrix<f64>, beta: C<f64>) -> Result<f64> {
        let pops = displaced_populations(rho, beta, self.levels())?;
        let (sp, sm) = self.signals_from_populations(&pops)?;
        Ok(self.estimate(sp, sm))
    }
}

/// Highest Fock level carrying population above `1e−12`.
pub fn support_level(rho: &DensityMatrix<f64>) -> usize {
    (0..rho.dim()).rev().find(|&n| rho.population(n) > 1e-12).unwrap_or(0)
}

/// Truncation needed to displace `rho` by `β` without losing norm.
pub fn displaced_dim(rho: &DensityMatrix<f64>, beta_abs: f64) -> usize {
    let reach = (support_level(rho) as f64).sqrt() + beta_abs;
    rho.dim().max(crate::fock::required_dim(reach))
}

/// Populations of `D(−β) ρ D(−β)†`, computed in an enlarged space when the
/// displacement pushes weight above the state's own truncation.
pub fn displaced_populations(rho: &DensityMatrix<f64>, beta: C<f64>, max_levels: usize) -> Result<Vec<f64>> {
    if rho.dims().len() != 1 {
        return Err(Error::DimensionMismatch("readout needs a single-mode state".into()));
    }
    let n = rho.dim();
    let m = displaced_dim(rho, beta.norm());
    if m > max_levels {
        return Err(Error::Truncation {
            what: format!("displacement by |beta| = {:.3}", beta.norm()),
            required: m,
            dim: max_levels,
        });
    }
    let d = displacement_op_with::<f64>(m, -beta, Guard::Disabled)?;
    let b = d.matrix().columns(0, n).into_owned();
    let br = &b * rho.matrix();
    Ok((0..m)
        .map(|k| (0..n).map(|j| (br[(k, j)] * b[(k, j)].conj()).re).sum::<f64>())
        .collect())
}

/// Heisenberg-picture Ramsey response per Fock level.
///
/// Propagates `y_n`, the effective qubit observable conditioned on the memory
/// holding `n` photons at the start of the idle, backwards through the
/// dispersive idle with memory loss and transmon noise.
fn ramsey_response(params: &DeviceParams, levels: usize, t_parity: f64, sign: f64) -> Vec<f64> {
    let chi = params.chi_qm_rad();
    let k1 = params.kappa1();
    let (up, down) = params.transmon_jump_rates();
    let gphi = params.transmon_dephasing_rate() / 2.0;
    let z = C::new(0.0, 0.0);
    let one = C::new(1.0, 0.0);
    let sm = M2::new(z, one, z, z);
    let sp = sm.adjoint();
    let sz = M2::new(one, z, z, -one);
    let jumps: Vec<(f64, M2)> = [(up, sp), (down, sm), (gphi, sz)]
        .into_iter()
        .filter(|(g, _)| *g > 0.0)
        .collect();
    let ldl: Vec<M2> = jumps.iter().map(|(_, l)| l.adjoint() * l).collect();
    let ee = excited_projector();
    let i = C::new(0.0, 1.0);

    let rhs = |y: &[M2], out: &mut [M2]| {
        for n in 0..y.len() {
            let h = ee * C::new(-chi * n as f64, 0.0);
            let mut d = (h * y[n] - y[n] * h) * i;
            if n > 0 && k1 > 0.0 {
                d += (y[n - 1] - y[n]) * C::new(k1 * n as f64, 0.0);
            }
            for ((g, l), q) in jumps.iter().zip(&ldl) {
                d += (l.adjoint() * y[n] * l - (q * y[n] + y[n] * q) * C::new(0.5, 0.0)) * C::new(*g, 0.0);
            }
            out[n] = d;
        }
    };

    let steps = (t_parity / 0.5).ceil() as usize;
    let dt = t_parity / steps as f64;
    let mut y = vec![readout_observable(sign); levels];
    let zero = M2::zeros();
    let (mut k1v, mut k2v, mut k3v, mut k4v, mut tmp) =
        (vec![zero; levels], vec![zero; levels], vec![zero; levels], vec![zero; levels], vec![zero; levels]);
    for _ in 0..steps {
        rhs(&y, &mut k1v);
        for n in 0..levels {
            tmp[n] = y[n] + k1v[n] * C::new(dt / 2.0, 0.0);
        }
        rhs(&tmp, &mut k2v);
        for n in 0..levels {
            tmp[n] = y[n] + k2v[n] * C::new(dt / 2.0, 0.0);
        }
        rhs(&tmp, &mut k3v);
        for n in 0..levels {
            tmp[n] = y[n] + k3v[n] * C::new(dt, 0.0);
        }
        rhs(&tmp, &mut k4v);
        for n in 0..levels {
            y[n] += (k1v[n] + (k2v[n] + k3v[n]) * C::new(2.0, 0.0) + k4v[n]) * C::new(dt / 6.0, 0.0);
        }
    }
    let rho_q = prepared_qubit();
    y.iter().map(|yn| (yn * rho_q).trace().re).collect()
}

/// Population transfer matrix of deflation (two-photon loss at α = 0 plus
/// single-photon loss) over `duration` ns: `p(T) = A p(0)`.
fn deflation_population_map(params: &DeviceParams, levels: usize, duration: f64) -> DMatrix<f64> {
    let k2 = params.kappa2();
    let k1 = params.kappa1();
    let mut g = DMatrix::<f64>::zeros(levels, levels);
    for n in 0..levels {
        let nf = n as f64;
        let two = k2 * nf * (nf - 1.0);
        let one = k1 * nf;
        g[(n, n)] -= two + one;
        if n >= 2 {
            g[(n - 2, n)] += two;
        }
        if n >= 1 {
            g[(n - 1, n)] += one;
        }
    }
    (g * duration).exp()
}

fn pull_back(map: &DMatrix<f64>, response: &[f64]) -> Vec<f64> {
    let r = nalgebra::DVector::from_column_slice(response);
    (map.transpose() * r).iter().copied().collect()
}

/// Reference implementation of the readout chain by direct master-equation
/// evolution: displace, optionally deflate for `deflation_ns`, attach the
/// transmon after the first π/2 pulse, idle for `π/χ_qm` at the off flux
/// point, and combine the two interleaved readouts normalized by the vacuum
/// contrast.
pub fn simulate_parity_readout(
    rho: &DensityMatrix<f64>,
    params: &DeviceParams,
    beta: C<f64>,
    settings: &ReadoutSettings,
) -> Result<f64> {
    if rho.dims().len() != 1 {
        return Err(Error::DimensionMismatch("readout needs a single-mode state".into()));
    }
    let dim = rho.dim();
    check_guard("parity readout displacement", dim, beta.norm(), Guard::Enforced)?;
    let d = displacement_op::<f64>(dim, -beta)?;
    let displaced = rho.conjugate(&d);
    let (sp, sm) = raw_ramsey_signals(&displaced, params, settings)?;
    let vacuum = fock_state::<f64>(2, 0)?.to_density();
    let (cp, cm) = raw_ramsey_signals(&vacuum, params, settings)?;
    Ok((sp - sm) / (cp - cm))
}

fn raw_ramsey_signals(rho: &DensityMatrix<f64>, params: &DeviceParams, settings: &ReadoutSettings) -> Result<(f64, f64)> {
    let dim = rho.dim();
    let zero = C::new(0.0, 0.0);
    let mut state = rho.clone();
    if settings.enhanced {
        let model = build_reduced_model(params, zero, ReducedOptions::default(), dim)?;
        let opts = EvolveOptions::new(1.0).store_every(0).record_every(usize::MAX);
        state = evolve(&model, &state, (0.0, settings.deflation_ns), &opts)?.final_state;
    }
    let u1 = first_pulse();
    let qubit = DensityMatrix::from_matrix(
        vec![2],
        DMatrix::from_fn(2, 2, |i, j| {
            let g = PureState::new(vec![2], nalgebra::DVector::from_vec(vec![u1[(0, 0)], u1[(1, 0)]])).expect("normalized");
            g.amplitudes()[i] * g.amplitudes()[j].conj()
        }),
    )?;
    let joint = state.tensor(&qubit);
    let model = build_reduced_model(
        params,
        zero,
        ReducedOptions::default().with_transmon().flux(FluxSetting::Off),
        dim,
    )?;
    let opts = EvolveOptions::new(1.0).store_every(0).record_every(usize::MAX);
    let t_parity = params.parity_time()?;
    let fin = evolve(&model, &joint, (0.0, t_parity), &opts)?.final_state;
    let q = fin.partial_trace(1)?;
    let x = M2::new(q.matrix()[(0, 0)], q.matrix()[(0, 1)], q.matrix()[(1, 0)], q.matrix()[(1, 1)]);
    let sp = (readout_observable(1.0) * x).trace().re + settings.offset;
    let sm = (readout_observable(-1.0) * x).trace().re + settings.offset;
    Ok((sp, sm))
}

/// Simulated tomography of `rho` with the chosen protocol.
pub fn tomography(
    rho: &DensityMatrix<f64>,
    params: &DeviceParams,
    grid: &WignerGrid,
    protocol: Protocol,
) -> Result<WignerMap> {
    let settings = match protocol {
        Protocol::Ideal => return wigner_map(rho, grid),
        Protocol::Ramsey => ReadoutSettings::ramsey(),
        Protocol::RamseyEnhanced => ReadoutSettings::enhanced(),
    };
    tomography_with(rho, params, grid, protocol, &settings)
}

pub fn tomography_with(
    rho: &DensityMatrix<f64>,
    params: &DeviceParams,
    grid: &WignerGrid,
    protocol: Protocol,
    settings: &ReadoutSettings,
) -> Result<WignerMap> {
    let levels = displaced_dim(rho, grid.max_abs());
    let readout = ParityReadout::new(params, *settings, levels)?;
    let values: Result<Vec<f64>> = grid
        .points()
        .par_iter()
        .map(|&b| readout.measure(rho, b).map(|p| p * 2.0 / PI))
        .collect();
    WignerMap::from_values(grid, values?, protocol)
}

/// Probability that a memory photon is lost during the parity idle, for the
/// Fock mixture `Σ p_n |n⟩⟨n|`: `1 − Σ p_n ⟨n|ρ_n(T)|n⟩`, each component
/// evolved under the dispersive idle model for `T = π/χ_qm`.
pub fn parity_flip_probability(params: &DeviceParams, mixture: &[(usize, f64)]) -> Result<f64> {
    let total: f64 = mixture.iter().map(|(_, p)| p).sum();
    if !(total > 0.0) {
        return Err(Error::InvalidParameter("mixture weights sum to zero".into()));
    }
    let t_parity = params.parity_time()?;
    let mut stay = 0.0;
    for &(n, p) in mixture {
        let dim = n + 2;
        let model = build_reduced_model(
            params,
            C::new(0.0, 0.0),
            ReducedOptions::default().flux(FluxSetting::Off),
            dim,
        )?;
        let rho0 = fock_state::<f64>(dim, n)?.to_density();
        let opts = EvolveOptions::new(1.0).store_every(0).record_every(usize::MAX);
        let fin = evolve(&model, &rho0, (0.0, t_parity), &opts)?.final_state;
        stay += p / total * fin.population(n);
    }
    Ok(1.0 - stay)
}

/// Settings of the QND parity cycle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QndCycle {
    pub alpha: C<f64>,
    pub deflate_ns: f64,
    pub inflate_ns: f64,
}

impl QndCycle {
    pub fn new(alpha: C<f64>) -> Self {
        Self {
            alpha,
            deflate_ns: 300.0,
            inflate_ns: 1500.0,
        }
    }
}

/// Outcome of [`qnd_parity_cycle`].
#[derive(Clone, Debug)]
pub struct QndOutcome {
    /// `⟨P⟩` of the deflated state.
    pub parity_estimate: f64,
    /// Projected parity, ±1 (the more likely one).
    pub outcome: i32,
    pub state: DensityMatrix<f64>,
}

/// Deflate, project on the more likely parity, and re-inflate.
pub fn qnd_parity_cycle(rho: &DensityMatrix<f64>, params: &DeviceParams, cycle: &QndCycle) -> Result<QndOutcome> {
    let dim = rho.dim();
    let opts = EvolveOptions::new(1.0).store_every(0).record_every(usize::MAX);
    let deflate = build_reduced_model(params, C::new(0.0, 0.0), ReducedOptions::default(), dim)?;
    let deflated = evolve(&deflate, rho, (0.0, cycle.deflate_ns), &opts)?.final_state;
    let parity = crate::fock::parity_op::<f64>(dim)?;
    let p = deflated.expect(&parity).re;
    let outcome = if p >= 0.0 { 1 } else { -1 };
    let proj = Operator::new(
        vec![dim],
        DMatrix::from_fn(dim, dim, |i, j| {
            if i == j && (if i % 2 == 0 { 1 } else { -1 }) == outcome {
                C::new(1.0, 0.0)
            } else {
                C::new(0.0, 0.0)
            }
        }),
        "parity projector",
    )?;
    let projected = deflated.conjugate(&proj);
    let weight = projected.trace();
    if weight <= 0.0 {
        return Err(Error::InvalidParameter("projected state has zero weight".into()));
    }
    let projected = DensityMatrix::from_matrix(vec![dim], projected.matrix().map(|z| z / weight))?;
    let inflate = build_reduced_model(params, cycle.alpha, ReducedOptions::default(), dim)?;
    let state = evolve(&inflate, &projected, (0.0, cycle.inflate_ns), &opts)?.final_state;
    Ok(QndOutcome {
        parity_estimate: p,
        outcome,
        state,
    })
}


#[cfg(test)]
mod props {
    use super::*;
    use crate::fock::PureState;
    use nalgebra::DVector;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn wigner_is_bounded(
            amps in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 8),
            re in -2.0f64..2.0,
            im in -2.0f64..2.0,
        ) {
            let v = DVector::from_iterator(8, amps.iter().map(|&(a, b)| C::new(a, b)));
            prop_assume!(v.norm() > 1e-3);
            let psi = PureState::new(vec![8], v.unscale(v.norm())).unwrap();
            let w = wigner_point(&psi.to_density(), C::new(re, im)).unwrap();
            prop_assert!(w.abs() <= 2.0 / PI + 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn readout_ignores_signal_offsets(offset in -0.5f64..0.5, re in -1.0f64..1.0, im in -1.0f64..1.0) {
            let p = DeviceParams::default();
            let rho = crate::fock::cat_state::<f64>(16, C::new(1.2, 0.0), crate::fock::CatPhase::Minus)
                .unwrap()
                .to_density();
            let b = C::new(re, im);
            let levels = displaced_dim(&rho, b.norm());
            let plain = ParityReadout::new(&p, ReadoutSettings::ramsey(), levels).unwrap();
            let shifted = ParityReadout::new(&p, ReadoutSettings { offset, ..ReadoutSettings::ramsey() }, levels).unwrap();
            prop_assert!((plain.measure(&rho, b).unwrap() - shifted.measure(&rho, b).unwrap()).abs() <= 1e-12);
        }
    }
}
