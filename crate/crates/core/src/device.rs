//! Device parameters and the master-equation factories built from them.
//!
//! Parameters are stored in the units of the device table (frequencies as
//! f = ω/2π in MHz or kHz, times in μs). Accessors without a unit suffix
//! return angular rates in rad/ns, which is what every model uses.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{annihilation_op, check_guard, number_op, tensor, Guard, Operator};
use crate::lindblad::{Coefficient, Dissipator, Hamiltonian, LindbladModel};
use crate::scalar::C;

type Op = Operator<f64>;

/// `2π·f` for `f` in MHz, in rad/ns.
pub fn mhz_to_rad_per_ns(f_mhz: f64) -> f64 {
    2.0 * PI * f_mhz * 1e-3
}

pub fn khz_to_rad_per_ns(f_khz: f64) -> f64 {
    2.0 * PI * f_khz * 1e-6
}

pub fn rad_per_ns_to_mhz(w: f64) -> f64 {
    w / (2.0 * PI * 1e-3)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceParams {
    #[serde(rename = "g2_over_2pi_MHz")]
    pub g2_over_2pi: f64,
    #[serde(rename = "kappa_b_over_2pi_MHz")]
    pub kappa_b_over_2pi: f64,
    #[serde(rename = "kappa2_over_2pi_MHz")]
    pub kappa2_over_2pi: f64,
    #[serde(rename = "kappa1_over_2pi_kHz")]
    pub kappa1_over_2pi: f64,
    #[serde(rename = "kappa_phi_m_over_2pi_MHz")]
    pub kappa_phi_m_over_2pi: f64,
    #[serde(rename = "kappa_phi_b_over_2pi_MHz")]
    pub kappa_phi_b_over_2pi: f64,
    #[serde(rename = "chi_mm_over_2pi_MHz")]
    pub chi_mm: f64,
    #[serde(rename = "chi_bb_over_2pi_MHz")]
    pub chi_bb: f64,
    #[serde(rename = "chi_mb_over_2pi_MHz")]
    pub chi_mb: f64,
    #[serde(rename = "chi_qm_over_2pi_MHz")]
    pub chi_qm: f64,
    #[serde(rename = "chi_qr_over_2pi_MHz")]
    pub chi_qr: f64,
    #[serde(rename = "transmon_T1_us")]
    pub transmon_t1: f64,
    #[serde(rename = "transmon_T2_us")]
    pub transmon_t2: f64,
    pub n_th_m: f64,
    pub n_th_q: f64,
    #[serde(rename = "delta_m_over_2pi_kHz")]
    pub delta_m_over_2pi: f64,
    #[serde(rename = "phi_on_Phi0")]
    pub phi_on: f64,
    #[serde(rename = "phi_off_Phi0")]
    pub phi_off: f64,
    #[serde(rename = "omega_m_over_2pi_GHz")]
    pub omega_m: f64,
    #[serde(rename = "omega_b_over_2pi_GHz")]
    pub omega_b: f64,
    #[serde(rename = "omega_q_over_2pi_GHz")]
    pub omega_q: f64,
    #[serde(rename = "omega_r_over_2pi_GHz")]
    pub omega_r: f64,
}

impl Default for DeviceParams {
    fn default() -> Self {
        Self {
            g2_over_2pi: 6.0,
            kappa_b_over_2pi: 40.0,
            kappa2_over_2pi: 2.16,
            kappa1_over_2pi: 14.0,
            kappa_phi_m_over_2pi: 0.08,
            kappa_phi_b_over_2pi: 0.0,
            chi_mm: 0.220,
            chi_bb: 10.0,
            chi_mb: 1.6,
            chi_qm: 0.170,
            chi_qr: 3.5,
            transmon_t1: 18.0,
            transmon_t2: 15.0,
            n_th_m: 0.011,
            n_th_q: 0.015,
            delta_m_over_2pi: 90.0,
            phi_on: 0.312,
            phi_off: 0.168,
            omega_m: 3.948,
            omega_b: 7.896,
            omega_q: 5.387,
            omega_r: 6.967,
        }
    }
}

impl DeviceParams {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(s)?;
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json_string()?)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let rates = [
            ("g2", self.g2_over_2pi),
            ("kappa_b", self.kappa_b_over_2pi),
            ("kappa2", self.kappa2_over_2pi),
            ("kappa1", self.kappa1_over_2pi),
            ("kappa_phi_m", self.kappa_phi_m_over_2pi),
            ("kappa_phi_b", self.kappa_phi_b_over_2pi),
            ("chi_qm", self.chi_qm),
            ("transmon_T1", self.transmon_t1),
            ("transmon_T2", self.transmon_t2),
        ];
        for (name, v) in rates {
            if v.is_nan() || v < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be non-negative, got {v}"
                )));
            }
        }
        if self.transmon_t2 > 2.0 * self.transmon_t1 {
            return Err(Error::InvalidParameter(format!(
                "T2 = {} us exceeds 2 T1 = {} us",
                self.transmon_t2,
                2.0 * self.transmon_t1
            )));
        }
        for (name, n) in [("n_th_m", self.n_th_m), ("n_th_q", self.n_th_q)] {
            if !(0.0..1.0).contains(&n) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must lie in [0, 1), got {n}"
                )));
            }
        }
        Ok(())
    }

    /// Copy with memory loss, memory and buffer dephasing and transmon noise
    /// removed.
    pub fn lossless(&self) -> Self {
        Self {
            kappa1_over_2pi: 0.0,
            kappa_phi_m_over_2pi: 0.0,
            kappa_phi_b_over_2pi: 0.0,
            transmon_t1: f64::INFINITY,
            transmon_t2: f64::INFINITY,
            n_th_q: 0.0,
            n_th_m: 0.0,
            ..self.clone()
        }
    }

    /// Copy with every Kerr and cross-Kerr term removed.
    pub fn kerr_free(&self) -> Self {
        Self {
            chi_mm: 0.0,
            chi_bb: 0.0,
            chi_mb: 0.0,
            ..self.clone()
        }
    }

    pub fn g2(&self) -> f64 {
        mhz_to_rad_per_ns(self.g2_over_2pi)
    }

    pub fn kappa_b(&self) -> f64 {
        mhz_to_rad_per_ns(self.kappa_b_over_2pi)
    }

    /// Measured two-photon dissipation rate used by reduced models.
    pub fn kappa2(&self) -> f64 {
        mhz_to_rad_per_ns(self.kappa2_over_2pi)
    }

    pub fn kappa1(&self) -> f64 {
        khz_to_rad_per_ns(self.kappa1_over_2pi)
    }

    pub fn kappa_phi_m(&self) -> f64 {
        mhz_to_rad_per_ns(self.kappa_phi_m_over_2pi)
    }

    pub fn kappa_phi_b(&self) -> f64 {
        mhz_to_rad_per_ns(self.kappa_phi_b_over_2pi)
    }

    pub fn chi_mm_rad(&self) -> f64 {
        mhz_to_rad_per_ns(self.chi_mm)
    }

    pub fn chi_bb_rad(&self) -> f64 {
        mhz_to_rad_per_ns(self.chi_bb)
    }

    pub fn chi_mb_rad(&self) -> f64 {
        mhz_to_rad_per_ns(self.chi_mb)
    }

    pub fn chi_qm_rad(&self) -> f64 {
        mhz_to_rad_per_ns(self.chi_qm)
    }

    pub fn delta_m(&self) -> f64 {
        khz_to_rad_per_ns(self.delta_m_over_2pi)
    }

    /// `Γ↑/Γ↓ = n/(1+n)`.
    pub fn transmon_up_down_ratio(&self) -> f64 {
        self.n_th_q / (1.0 + self.n_th_q)
    }

    /// `(Γ↑, Γ↓)` in 1/ns with `Γ↑ + Γ↓ = 1/T1`.
    pub fn transmon_jump_rates(&self) -> (f64, f64) {
        let total = 1.0 / (self.transmon_t1 * 1e3);
        let r = self.transmon_up_down_ratio();
        let down = total / (1.0 + r);
        (r * down, down)
    }

    /// `Γ_φ = 1/T2 − 1/(2T1)` in 1/ns.
    pub fn transmon_dephasing_rate(&self) -> f64 {
        let t1 = self.transmon_t1 * 1e3;
        let t2 = self.transmon_t2 * 1e3;
        (1.0 / t2 - 0.5 / t1).max(0.0)
    }

    /// Idle time `π/χ_qm` mapping photon parity onto the transmon, in ns.
    pub fn parity_time(&self) -> Result<f64> {
        if self.chi_qm <= 0.0 {
            return Err(Error::InvalidParameter(
                "chi_qm must be positive for parity mapping".into(),
            ));
        }
        Ok(PI / self.chi_qm_rad())
    }

    /// Stabilizing buffer drive `ε = −g₂ α²` in rad/ns (g₂ taken real).
    pub fn stabilizing_drive(&self, alpha: C<f64>) -> C<f64> {
        -(alpha * alpha) * self.g2()
    }
}

/// `4g₂²/κ_b` in MHz (same /2π convention as the inputs).
pub fn kappa2_effective(params: &DeviceParams) -> Result<f64> {
    if params.kappa_b_over_2pi <= 0.0 {
        return Err(Error::InvalidParameter("kappa_b must be positive".into()));
    }
    Ok(4.0 * params.g2_over_2pi * params.g2_over_2pi / params.kappa_b_over_2pi)
}

/// Cat phase-flip rate `2|α|²κ₁`, returned as f = Γ/2π in MHz.
pub fn phase_flip_rate(params: &DeviceParams, alpha: C<f64>) -> f64 {
    2.0 * alpha.norm_sqr() * params.kappa1_over_2pi * 1e-3
}

/// Whether the flux point enables the two-to-one exchange.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FluxSetting {
    #[default]
    On,
    Off,
}

/// Bipartite memory ⊗ buffer model with buffer drive `ε_d(t)`.
pub fn build_bipartite_model(
    params: &DeviceParams,
    drive: Coefficient<f64>,
    dims: (usize, usize),
    flux: FluxSetting,
) -> Result<LindbladModel<f64>> {
    params.validate()?;
    let (dm, db) = dims;
    let d = vec![dm, db];
    let m = annihilation_op::<f64>(dm)?.embed(0, &d)?;
    let b = annihilation_op::<f64>(db)?.embed(1, &d)?;
    let nm = number_op::<f64>(dm)?.embed(0, &d)?;
    let nb = number_op::<f64>(db)?.embed(1, &d)?;
    let md = m.adjoint();
    let bd = b.adjoint();
    let m2 = &m * &m;
    let md2 = &md * &md;
    let b2 = &b * &b;
    let bd2 = &bd * &bd;

    let kerr_m = (&md2 * &m2).scale(C::new(-params.chi_mm_rad() / 2.0, 0.0));
    let kerr_b = (&bd2 * &b2).scale(C::new(-params.chi_bb_rad() / 2.0, 0.0));
    let cross = (&nm * &nb).scale(C::new(-params.chi_mb_rad(), 0.0));
    let mut h0 = &(&kerr_m + &kerr_b) + &cross;
    let mut ham;
    if flux == FluxSetting::On {
        let g2 = params.g2();
        let exchange = (&m2 * &bd).scale(C::new(g2, 0.0));
        h0 = &(&h0 + &exchange) + &exchange.adjoint();
        ham = Hamiltonian::new(h0.with_label("H_bipartite"));
        // ε_d b† + ε_d* b, so that the eliminated jump is m² + ε_d/g₂.
        ham.drives.push(crate::lindblad::Drive {
            op: bd.clone(),
            coeff: drive,
        });
    } else {
        ham = Hamiltonian::new(h0.with_label("H_bipartite_off"));
    }
    let mut diss = vec![
        Dissipator::new(params.kappa1(), m.clone(), "kappa1 D[m]"),
        Dissipator::new(params.kappa_phi_m(), nm.clone(), "kappa_phi_m D[m+m]"),
        Dissipator::new(params.kappa_b(), b.clone(), "kappa_b D[b]"),
        Dissipator::new(params.kappa_phi_b(), nb.clone(), "kappa_phi_b D[b+b]"),
    ];
    diss.retain(|d| d.rate > 0.0);
    LindbladModel::new(d, ham, diss)
}

/// Flags for [`build_reduced_model`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReducedOptions {
    pub flux: FluxSetting,
    /// Attach a transmon (memory ⊗ qubit) with dispersive coupling and noise.
    pub include_transmon: bool,
    /// Add the memory self-Kerr `−(χ_mm/2) m†²m²`.
    pub include_kerr: bool,
    /// Add memory heating `κ₁ n_th,m D[m†]`.
    pub thermal_memory: bool,
    /// Add a memory detuning `Δ_m m†m`.
    pub detuning: bool,
}

impl Default for ReducedOptions {
    fn default() -> Self {
        Self {
            flux: FluxSetting::On,
            include_transmon: false,
            include_kerr: false,
            thermal_memory: false,
            detuning: false,
        }
    }
}

impl ReducedOptions {
    pub fn with_transmon(mut self) -> Self {
        self.include_transmon = true;
        self
    }

    pub fn flux(mut self, flux: FluxSetting) -> Self {
        self.flux = flux;
        self
    }
}

/// Target of the two-photon jump `m² − α²(t)`.
#[derive(Clone)]
pub enum TwoPhotonTarget {
    Constant(C<f64>),
    /// Time-dependent `α²(t)`, implemented as `κ₂D[m²]` plus the compensating
    /// Hamiltonian `(iκ₂/2)(α² m†² − α²* m²)`.
    Driven(Coefficient<f64>),
}

/// Memory model with the buffer adiabatically eliminated.
///
/// `alpha` is the cat amplitude whose square sets the jump `m² − α²`; zero
/// gives pure deflation.
pub fn build_reduced_model(
    params: &DeviceParams,
    alpha: C<f64>,
    options: ReducedOptions,
    dim: usize,
) -> Result<LindbladModel<f64>> {
    check_guard("reduced model", dim, alpha.norm(), Guard::Enforced)?;
    build_reduced_model_with(
        params,
        TwoPhotonTarget::Constant(alpha * alpha),
        options,
        dim,
    )
}

pub fn build_reduced_model_with(
    params: &DeviceParams,
    target: TwoPhotonTarget,
    options: ReducedOptions,
    dim: usize,
) -> Result<LindbladModel<f64>> {
    params.validate()?;
    let a = annihilation_op::<f64>(dim)?;
    let n = number_op::<f64>(dim)?;
    let a2 = &a * &a;
    let id = Op::identity(&[dim]);

    let mut h0 = Op::zeros(&[dim]);
    if options.include_kerr {
        let ad2 = a2.adjoint();
        h0 = &h0 + &(&ad2 * &a2).scale(C::new(-params.chi_mm_rad() / 2.0, 0.0));
    }
    if options.detuning {
        h0 = &h0 + &n.scale(C::new(params.delta_m(), 0.0));
    }

    let kappa2 = if options.flux == FluxSetting::On {
        params.kappa2()
    } else {
        0.0
    };
    let mut mem_diss: Vec<Dissipator<f64>> = Vec::new();
    let mut drive: Option<(Op, Coefficient<f64>)> = None;
    match target {
        TwoPhotonTarget::Constant(a_sq) => {
            let jump = &a2 - &id.scale(a_sq);
            mem_diss.push(Dissipator::new(kappa2, jump, "kappa2 D[m^2 - alpha^2]"));
        }
        TwoPhotonTarget::Driven(a_sq) => {
            mem_diss.push(Dissipator::new(kappa2, a2.clone(), "kappa2 D[m^2]"));
            let half = kappa2 / 2.0;
            let coeff: Coefficient<f64> = std::sync::Arc::new(move |t| a_sq(t) * C::new(0.0, half));
            drive = Some((a2.adjoint(), coeff));
        }
    }
    mem_diss.push(Dissipator::new(params.kappa1(), a.clone(), "kappa1 D[m]"));
    mem_diss.push(Dissipator::new(
        params.kappa_phi_m(),
        n.clone(),
        "kappa_phi_m D[m+m]",
    ));
    if options.thermal_memory {
        mem_diss.push(Dissipator::new(
            params.kappa1() * params.n_th_m,
            a.adjoint(),
            "kappa1 n_th D[m+]",
        ));
    }
    mem_diss.retain(|d| d.rate > 0.0);

    if !options.include_transmon {
        let mut ham = Hamiltonian::new(h0.with_label("H_reduced"));
        if let Some((op, coeff)) = drive {
            ham.drives.push(crate::lindblad::Drive { op, coeff });
        }
        return LindbladModel::new(vec![dim], ham, mem_diss);
    }

    let dims = vec![dim, 2];
    let lift_m = |op: &Op| tensor(op, &Op::identity(&[2])).with_label(op.label().to_string());
    let sm = annihilation_op::<f64>(2)?;
    let sm_full = tensor(&id, &sm);
    let sz = Op::new(
        vec![2],
        DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            C::new(1.0, 0.0),
            C::new(-1.0, 0.0),
        ])),
        "sz",
    )?;
    let excited = number_op::<f64>(2)?;
    let dispersive = tensor(&n, &excited).scale(C::new(-params.chi_qm_rad(), 0.0));
    let mut ham = Hamiltonian::new((&lift_m(&h0) + &dispersive).with_label("H_reduced_transmon"));
    if let Some((op, coeff)) = drive {
        ham.drives.push(crate::lindblad::Drive {
            op: lift_m(&op),
            coeff,
        });
    }
    let mut diss: Vec<Dissipator<f64>> = mem_diss
        .into_iter()
        .map(|d| Dissipator::new(d.rate, lift_m(&d.jump), d.label))
        .collect();
    let (up, down) = params.transmon_jump_rates();
    diss.push(Dissipator::new(up, sm_full.adjoint(), "Gamma_up D[s+]"));
    diss.push(Dissipator::new(down, sm_full, "Gamma_down D[s-]"));
    diss.push(Dissipator::new(
        params.transmon_dephasing_rate() / 2.0,
        tensor(&id, &sz),
        "Gamma_phi/2 D[sz]",
    ));
    diss.retain(|d| d.rate > 0.0);
    LindbladModel::new(dims, ham, diss)
}
