//! Truncated Fock-space operator algebra and canonical state constructors.
//!
//! Every operator and state carries the per-mode truncation it lives on
//! (`dims`). Multi-mode spaces use a fixed ordering, memory ⊗ buffer ⊗
//! transmon, with the first mode as the most significant index of the
//! Kronecker product.
//!
//! Quadratures follow `x = (m + m†)/2`, `p = (m - m†)/(2i)`, so the vacuum has
//! variance 1/4 in each quadrature and a coherent state `|β⟩` sits at
//! `x + ip = β` in phase space.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{abs, c, cr, norm_sqr, Real, C};

/// Whether a constructor enforces the truncation heuristic
/// `dim > |β|² + 4|β|`.
///
/// The heuristic keeps more than `1 - 1e-6` of a displaced vacuum's norm
/// inside the truncated space.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Guard {
    #[default]
    Enforced,
    Disabled,
}

/// Smallest dimension accepted by the truncation guard for amplitude `beta_abs`.
pub fn required_dim(beta_abs: f64) -> usize {
    (beta_abs * beta_abs + 4.0 * beta_abs).floor() as usize + 1
}

pub(crate) fn check_guard(what: &str, dim: usize, beta_abs: f64, guard: Guard) -> Result<()> {
    if guard == Guard::Disabled {
        return Ok(());
    }
    let required = required_dim(beta_abs);
    if dim < required {
        return Err(Error::Truncation {
            what: what.to_string(),
            required,
            dim,
        });
    }
    Ok(())
}

fn total_dim(dims: &[usize]) -> usize {
    dims.iter().product()
}

fn check_dim(dim: usize, min: usize) -> Result<()> {
    if dim < min {
        return Err(Error::InvalidDimension(format!(
            "Fock truncation must be at least {min}, got {dim}"
        )));
    }
    Ok(())
}

/// Dense complex operator on a (possibly multi-mode) truncated Fock space.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator<T: Real> {
    dims: Vec<usize>,
    matrix: DMatrix<C<T>>,
    label: String,
}

impl<T: Real> Operator<T> {
    pub fn new(dims: Vec<usize>, matrix: DMatrix<C<T>>, label: impl Into<String>) -> Result<Self> {
        if dims.is_empty() || dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidDimension(format!(
                "bad mode dimensions {dims:?}"
            )));
        }
        let n = total_dim(&dims);
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "matrix is {}x{}, dims {:?} require {n}x{n}",
                matrix.nrows(),
                matrix.ncols(),
                dims
            )));
        }
        Ok(Self {
            dims,
            matrix,
            label: label.into(),
        })
    }

    pub(crate) fn from_parts(
        dims: Vec<usize>,
        matrix: DMatrix<C<T>>,
        label: impl Into<String>,
    ) -> Self {
        debug_assert_eq!(matrix.nrows(), total_dim(&dims));
        Self {
            dims,
            matrix,
            label: label.into(),
        }
    }

    pub fn identity(dims: &[usize]) -> Self {
        let n = total_dim(dims);
        Self::from_parts(dims.to_vec(), DMatrix::identity(n, n), "I")
    }

    pub fn zeros(dims: &[usize]) -> Self {
        let n = total_dim(dims);
        Self::from_parts(dims.to_vec(), DMatrix::zeros(n, n), "0")
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Side length of the matrix.
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C<T>> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<C<T>> {
        self.matrix
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn adjoint(&self) -> Self {
        Self::from_parts(
            self.dims.clone(),
            self.matrix.adjoint(),
            format!("{}†", self.label),
        )
    }

    pub fn scale(&self, s: C<T>) -> Self {
        Self::from_parts(
            self.dims.clone(),
            self.matrix.map(|z| z * s),
            self.label.clone(),
        )
    }

    /// Integer power by repeated multiplication.
    pub fn pow(&self, k: u32) -> Self {
        let mut out = Self::identity(&self.dims);
        for _ in 0..k {
            out = &out * self;
        }
        out.with_label(format!("{}^{k}", self.label))
    }

    pub fn commutator(&self, other: &Self) -> Self {
        &(self * other) - &(other * self)
    }

    /// Matrix exponential (scaling and squaring with Padé approximants).
    pub fn exp(&self) -> Self {
        Self::from_parts(
            self.dims.clone(),
            self.matrix.clone().exp(),
            format!("exp({})", self.label),
        )
    }

    pub fn trace(&self) -> C<T> {
        self.matrix.trace()
    }

    /// Largest entry modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        assert_eq!(self.dim(), other.dim(), "operator dimensions differ");
        self.matrix
            .iter()
            .zip(other.matrix.iter())
            .map(|(a, b)| abs(*a - *b))
            .fold(T::zero(), |m, x| if x > m { x } else { m })
    }

    /// `‖U†U − I‖_max`.
    pub fn unitarity_error(&self) -> T {
        let prod = &self.adjoint() * self;
        prod.max_abs_diff(&Self::identity(&self.dims))
    }

    pub fn is_hermitian(&self, tol: T) -> bool {
        self.max_abs_diff(&self.adjoint()) <= tol
    }

    /// Lifts a single-mode operator into a multi-mode space at position `mode`.
    pub fn embed(&self, mode: usize, dims: &[usize]) -> Result<Self> {
        if mode >= dims.len() || dims[mode] != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "cannot place a {}-level operator at mode {mode} of {dims:?}",
                self.dim()
            )));
        }
        let mut out: Option<Self> = None;
        for (k, &d) in dims.iter().enumerate() {
            let factor = if k == mode {
                self.clone()
            } else {
                Self::identity(&[d])
            };
            out = Some(match out {
                None => factor,
                Some(acc) => tensor(&acc, &factor),
            });
        }
        let mut out = out.expect("dims is non-empty");
        out.label = format!("{}@{mode}", self.label);
        Ok(out)
    }

    /// Applies the operator to a pure state.
    pub fn apply(&self, psi: &PureState<T>) -> Result<PureState<T>> {
        if psi.dim() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "operator of size {} applied to state of size {}",
                self.dim(),
                psi.dim()
            )));
        }
        Ok(PureState {
            dims: self.dims.clone(),
            amplitudes: &self.matrix * &psi.amplitudes,
        })
    }
}

impl<T: Real> fmt::Display for Operator<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Operator({}, dims={:?})", self.label, self.dims)
    }
}

impl<'a, T: Real> Mul<&'a Operator<T>> for &'a Operator<T> {
    type Output = Operator<T>;

    fn mul(self, rhs: &'a Operator<T>) -> Operator<T> {
        assert_eq!(self.dims, rhs.dims, "operator dims differ");
        Operator::from_parts(
            self.dims.clone(),
            &self.matrix * &rhs.matrix,
            format!("{}{}", self.label, rhs.label),
        )
    }
}

impl<'a, T: Real> Add<&'a Operator<T>> for &'a Operator<T> {
    type Output = Operator<T>;

    fn add(self, rhs: &'a Operator<T>) -> Operator<T> {
        assert_eq!(self.dims, rhs.dims, "operator dims differ");
        Operator::from_parts(
            self.dims.clone(),
            &self.matrix + &rhs.matrix,
            format!("({} + {})", self.label, rhs.label),
        )
    }
}

impl<'a, T: Real> Sub<&'a Operator<T>> for &'a Operator<T> {
    type Output = Operator<T>;

    fn sub(self, rhs: &'a Operator<T>) -> Operator<T> {
        assert_eq!(self.dims, rhs.dims, "operator dims differ");
        Operator::from_parts(
            self.dims.clone(),
            &self.matrix - &rhs.matrix,
            format!("({} - {})", self.label, rhs.label),
        )
    }
}

impl<T: Real> Neg for &Operator<T> {
    type Output = Operator<T>;

    fn neg(self) -> Operator<T> {
        self.scale(cr(-T::one()))
    }
}

/// Kronecker product `a ⊗ b`; `a` is the more significant index.
pub fn tensor<T: Real>(a: &Operator<T>, b: &Operator<T>) -> Operator<T> {
    let mut dims = a.dims.clone();
    dims.extend_from_slice(&b.dims);
    Operator::from_parts(
        dims,
        a.matrix.kronecker(&b.matrix),
        format!("{}⊗{}", a.label, b.label),
    )
}

/// Annihilation operator with `⟨n−1|a|n⟩ = √n`.
pub fn annihilation_op<T: Real>(dim: usize) -> Result<Operator<T>> {
    check_dim(dim, 2)?;
    let mut m = DMatrix::zeros(dim, dim);
    for n in 1..dim {
        m[(n - 1, n)] = cr(T::lit(n as f64).sqrt());
    }
    Ok(Operator::from_parts(vec![dim], m, "a"))
}

pub fn creation_op<T: Real>(dim: usize) -> Result<Operator<T>> {
    Ok(annihilation_op::<T>(dim)?.adjoint().with_label("a†"))
}

/// `a†a`, built directly so the diagonal is exactly `0, 1, …, dim−1`.
pub fn number_op<T: Real>(dim: usize) -> Result<Operator<T>> {
    check_dim(dim, 1)?;
    let m = DMatrix::from_fn(dim, dim, |i, j| {
        if i == j {
            cr(T::lit(i as f64))
        } else {
            C::new(T::zero(), T::zero())
        }
    });
    Ok(Operator::from_parts(vec![dim], m, "n"))
}

/// Photon-number parity `exp(iπ a†a)`.
pub fn parity_op<T: Real>(dim: usize) -> Result<Operator<T>> {
    check_dim(dim, 1)?;
    let m = DMatrix::from_fn(dim, dim, |i, j| {
        if i != j {
            C::new(T::zero(), T::zero())
        } else if i % 2 == 0 {
            cr(T::one())
        } else {
            cr(-T::one())
        }
    });
    Ok(Operator::from_parts(vec![dim], m, "P"))
}

/// Phase-space rotation `exp(−iθ a†a)`, mapping `|β e^{iθ}⟩` to `|β⟩`.
pub fn rotation_op<T: Real>(dim: usize, theta: T) -> Result<Operator<T>> {
    check_dim(dim, 1)?;
    let m = DMatrix::from_fn(dim, dim, |i, j| {
        if i == j {
            let phi = -theta * T::lit(i as f64);
            c(phi.cos(), phi.sin())
        } else {
            C::new(T::zero(), T::zero())
        }
    });
    Ok(Operator::from_parts(vec![dim], m, "R"))
}

/// Displacement `D(β) = exp(β a† − β* a)` with the default truncation guard.
pub fn displacement_op<T: Real>(dim: usize, beta: C<T>) -> Result<Operator<T>> {
    displacement_op_with(dim, beta, Guard::Enforced)
}

pub fn displacement_op_with<T: Real>(dim: usize, beta: C<T>, guard: Guard) -> Result<Operator<T>> {
    check_dim(dim, 2)?;
    check_guard("displacement", dim, abs(beta).to_f64(), guard)?;
    let a = annihilation_op::<T>(dim)?;
    let gen = &a.adjoint().scale(beta) - &a.scale(beta.conj());
    Ok(gen.exp().with_label("D"))
}

/// Squeezing `exp(r(a² − a†²)/2)`; for `r > 0` the `x` quadrature is squeezed.
pub fn squeeze_op<T: Real>(dim: usize, r: T) -> Result<Operator<T>> {
    check_dim(dim, 2)?;
    if r.abs() > T::lit(3.0) {
        return Err(Error::Truncation {
            what: format!("squeezing r = {r} (|r| <= 3 supported)"),
            required: dim,
            dim,
        });
    }
    let a = annihilation_op::<T>(dim)?;
    let a2 = &a * &a;
    let gen = (&a2 - &a2.adjoint()).scale(cr(r / T::lit(2.0)));
    Ok(gen.exp().with_label("S"))
}

/// Normalized state vector.
#[derive(Clone, Debug, PartialEq)]
pub struct PureState<T: Real> {
    dims: Vec<usize>,
    amplitudes: DVector<C<T>>,
}

impl<T: Real> PureState<T> {
    /// Builds a state from raw amplitudes and normalizes it.
    pub fn new(dims: Vec<usize>, amplitudes: DVector<C<T>>) -> Result<Self> {
        if amplitudes.len() != total_dim(&dims) {
            return Err(Error::DimensionMismatch(format!(
                "{} amplitudes for dims {dims:?}",
                amplitudes.len()
            )));
        }
        let norm = amplitudes
            .iter()
            .map(|z| norm_sqr(*z))
            .fold(T::zero(), |a, b| a + b)
            .sqrt();
        if !(norm > T::lit(1e-300)) || !norm.is_finite() {
            return Err(Error::InvalidParameter(
                "state has zero or non-finite norm".into(),
            ));
        }
        let inv = cr(T::one() / norm);
        Ok(Self {
            dims,
            amplitudes: amplitudes.map(|z| z * inv),
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &DVector<C<T>> {
        &self.amplitudes
    }

    pub fn norm(&self) -> T {
        self.amplitudes
            .iter()
            .map(|z| norm_sqr(*z))
            .fold(T::zero(), |a, b| a + b)
            .sqrt()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &Self) -> C<T> {
        self.amplitudes.dotc(&other.amplitudes)
    }

    pub fn expect(&self, op: &Operator<T>) -> C<T> {
        self.amplitudes.dotc(&(op.matrix() * &self.amplitudes))
    }

    pub fn to_density(&self) -> DensityMatrix<T> {
        DensityMatrix {
            dims: self.dims.clone(),
            matrix: &self.amplitudes * self.amplitudes.adjoint(),
        }
    }

    pub fn tensor(&self, other: &Self) -> Self {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        Self {
            dims,
            amplitudes: self.amplitudes.kronecker(&other.amplitudes),
        }
    }
}

/// Relative phase between the two coherent components of a cat state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CatPhase {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
    #[serde(rename = "+i")]
    PlusI,
    #[serde(rename = "-i")]
    MinusI,
}

impl CatPhase {
    pub fn coefficient<T: Real>(self) -> C<T> {
        match self {
            CatPhase::Plus => c(T::one(), T::zero()),
            CatPhase::Minus => c(-T::one(), T::zero()),
            CatPhase::PlusI => c(T::zero(), T::one()),
            CatPhase::MinusI => c(T::zero(), -T::one()),
        }
    }
}

fn coherent_amplitudes<T: Real>(dim: usize, alpha: C<T>) -> DVector<C<T>> {
    let mut v = DVector::zeros(dim);
    v[0] = cr((-norm_sqr(alpha) / T::lit(2.0)).exp());
    for n in 1..dim {
        v[n] = v[n - 1] * alpha / cr(T::lit(n as f64).sqrt());
    }
    v
}

/// Coherent state `|α⟩`, renormalized after truncation.
pub fn coherent_state<T: Real>(dim: usize, alpha: C<T>) -> Result<PureState<T>> {
    coherent_state_with(dim, alpha, Guard::Enforced)
}

pub fn coherent_state_with<T: Real>(dim: usize, alpha: C<T>, guard: Guard) -> Result<PureState<T>> {
    check_dim(dim, 1)?;
    check_guard("coherent state", dim, abs(alpha).to_f64(), guard)?;
    PureState::new(vec![dim], coherent_amplitudes(dim, alpha))
}

/// Cat state `∝ |α⟩ + c|−α⟩` with `c ∈ {1, −1, i, −i}`.
pub fn cat_state<T: Real>(dim: usize, alpha: C<T>, phase: CatPhase) -> Result<PureState<T>> {
    check_dim(dim, 1)?;
    check_guard("cat state", dim, abs(alpha).to_f64(), Guard::Enforced)?;
    let plus = coherent_amplitudes(dim, alpha);
    let minus = coherent_amplitudes(dim, -alpha);
    let k = phase.coefficient::<T>();
    PureState::new(vec![dim], &plus + minus.map(|z| z * k))
}

/// Fock state `|n⟩`.
pub fn fock_state<T: Real>(dim: usize, n: usize) -> Result<PureState<T>> {
    check_dim(dim, 1)?;
    if n >= dim {
        return Err(Error::InvalidDimension(format!(
            "Fock level {n} outside truncation {dim}"
        )));
    }
    let mut v = DVector::zeros(dim);
    v[n] = cr(T::one());
    Ok(PureState {
        dims: vec![dim],
        amplitudes: v,
    })
}

/// Density matrix on a truncated multi-mode space.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix<T: Real> {
    dims: Vec<usize>,
    matrix: DMatrix<C<T>>,
}

impl<T: Real> DensityMatrix<T> {
    /// Validated constructor: Hermitian within 1e−10, unit trace within 1e−8,
    /// smallest eigenvalue above −1e−8.
    pub fn new(dims: Vec<usize>, matrix: DMatrix<C<T>>) -> Result<Self> {
        let rho = Self::from_matrix(dims, matrix)?;
        rho.validate(T::lit(1e-10), T::lit(1e-8), T::lit(1e-8))?;
        Ok(rho)
    }

    /// Shape-checked constructor without physicality checks.
    pub fn from_matrix(dims: Vec<usize>, matrix: DMatrix<C<T>>) -> Result<Self> {
        let n = total_dim(&dims);
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "density matrix is {}x{}, dims {dims:?} require {n}x{n}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self { dims, matrix })
    }

    /// Maximally mixed state.
    pub fn mixed(dims: &[usize]) -> Self {
        let n = total_dim(dims);
        Self {
            dims: dims.to_vec(),
            matrix: DMatrix::identity(n, n).map(|z: C<T>| z / cr(T::lit(n as f64))),
        }
    }

    /// Diagonal Fock mixture `Σ p_n |n⟩⟨n|` (weights renormalized).
    pub fn fock_mixture(dim: usize, weights: &[(usize, T)]) -> Result<Self> {
        let mut m = DMatrix::<C<T>>::zeros(dim, dim);
        let mut total = T::zero();
        for &(n, p) in weights {
            if n >= dim || p < T::zero() {
                return Err(Error::InvalidParameter(format!(
                    "bad mixture component ({n}, {p})"
                )));
            }
            m[(n, n)] += cr(p);
            total += p;
        }
        if !(total > T::zero()) {
            return Err(Error::InvalidParameter(
                "mixture weights sum to zero".into(),
            ));
        }
        Ok(Self {
            dims: vec![dim],
            matrix: m.map(|z| z / cr(total)),
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C<T>> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<C<T>> {
        self.matrix
    }

    pub fn trace(&self) -> T {
        self.matrix.trace().re
    }

    /// `Tr(ρ O)`.
    pub fn expect(&self, op: &Operator<T>) -> C<T> {
        assert_eq!(op.dim(), self.dim(), "operator and state dimensions differ");
        let n = self.dim();
        let mut acc = C::new(T::zero(), T::zero());
        let (r, o) = (self.matrix.as_slice(), op.matrix().as_slice());
        // Tr(ρO) = Σ_ij ρ_ij O_ji; both column-major.
        for j in 0..n {
            for i in 0..n {
                acc += r[j * n + i] * o[i * n + j];
            }
        }
        acc
    }

    /// `⟨ψ|ρ|ψ⟩`.
    pub fn fidelity_pure(&self, psi: &PureState<T>) -> T {
        assert_eq!(psi.dim(), self.dim(), "state dimensions differ");
        psi.amplitudes.dotc(&(&self.matrix * &psi.amplitudes)).re
    }

    pub fn purity(&self) -> T {
        self.matrix
            .iter()
            .map(|z| norm_sqr(*z))
            .fold(T::zero(), |a, b| a + b)
    }

    pub fn hermiticity_error(&self) -> T {
        let n = self.dim();
        let mut worst = T::zero();
        for j in 0..n {
            for i in 0..=j {
                let d = abs(self.matrix[(i, j)] - self.matrix[(j, i)].conj());
                if d > worst {
                    worst = d;
                }
            }
        }
        worst
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues(&self) -> Vec<T> {
        let h = (&self.matrix + self.matrix.adjoint()).map(|z| z / cr(T::lit(2.0)));
        let mut ev: Vec<T> = SymmetricEigen::new(h).eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        ev
    }

    pub fn min_eigenvalue(&self) -> T {
        self.eigenvalues().first().copied().unwrap_or(T::zero())
    }

    pub fn validate(&self, herm_tol: T, trace_tol: T, eig_tol: T) -> Result<()> {
        let h = self.hermiticity_error();
        if h > herm_tol {
            return Err(Error::InvalidParameter(format!(
                "density matrix not Hermitian (deviation {h})"
            )));
        }
        let tr = self.trace();
        if (tr - T::one()).abs() > trace_tol {
            return Err(Error::InvalidParameter(format!(
                "density matrix trace {tr} != 1"
            )));
        }
        let lam = self.min_eigenvalue();
        if lam < -eig_tol {
            return Err(Error::InvalidParameter(format!(
                "density matrix eigenvalue {lam} < 0"
            )));
        }
        Ok(())
    }

    /// `U ρ U†`.
    pub fn conjugate(&self, u: &Operator<T>) -> Self {
        assert_eq!(u.dim(), self.dim(), "unitary and state dimensions differ");
        Self {
            dims: self.dims.clone(),
            matrix: u.matrix() * &self.matrix * u.matrix().adjoint(),
        }
    }

    pub fn tensor(&self, other: &Self) -> Self {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        Self {
            dims,
            matrix: self.matrix.kronecker(&other.matrix),
        }
    }

    /// `(ρ + ρ†)/2`.
    pub fn symmetrized(mut self) -> Self {
        let half = cr(T::lit(0.5));
        let n = self.dim();
        for j in 0..n {
            for i in 0..j {
                let avg = (self.matrix[(i, j)] + self.matrix[(j, i)].conj()) * half;
                self.matrix[(i, j)] = avg;
                self.matrix[(j, i)] = avg.conj();
            }
            let d = self.matrix[(j, j)];
            self.matrix[(j, j)] = cr(d.re);
        }
        self
    }

    /// Reduced state of a single mode.
    pub fn partial_trace(&self, keep_mode: usize) -> Result<Self> {
        partial_trace(self, keep_mode)
    }

    /// Re-embeds a single-mode state into a different truncation, padding with
    /// zeros or discarding the levels above the new cutoff.
    pub fn resized(&self, dim: usize) -> Result<Self> {
        if self.dims.len() != 1 {
            return Err(Error::DimensionMismatch(
                "resize needs a single-mode state".into(),
            ));
        }
        check_dim(dim, 1)?;
        let old = self.dim();
        let m = DMatrix::from_fn(dim, dim, |i, j| {
            if i < old && j < old {
                self.matrix[(i, j)]
            } else {
                C::new(T::zero(), T::zero())
            }
        });
        Ok(Self {
            dims: vec![dim],
            matrix: m,
        })
    }

    /// Population of the Fock level `n` in a single-mode state.
    pub fn population(&self, n: usize) -> T {
        if n < self.dim() {
            self.matrix[(n, n)].re
        } else {
            T::zero()
        }
    }
}

/// Traces out every mode except `keep_mode`.
pub fn partial_trace<T: Real>(
    rho: &DensityMatrix<T>,
    keep_mode: usize,
) -> Result<DensityMatrix<T>> {
    let dims = rho.dims();
    if keep_mode >= dims.len() {
        return Err(Error::DimensionMismatch(format!(
            "mode {keep_mode} out of range for dims {dims:?}"
        )));
    }
    let dk = dims[keep_mode];
    let inner: usize = dims[keep_mode + 1..].iter().product();
    let outer: usize = dims[..keep_mode].iter().product();
    let mut out = DMatrix::zeros(dk, dk);
    let m = rho.matrix();
    for o in 0..outer {
        for i in 0..inner {
            for a in 0..dk {
                let ra = (o * dk + a) * inner + i;
                for b in 0..dk {
                    let rb = (o * dk + b) * inner + i;
                    out[(a, b)] += m[(ra, rb)];
                }
            }
        }
    }
    Ok(DensityMatrix {
        dims: vec![dk],
        matrix: out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    type F = f64;

    fn cx(re: f64, im: f64) -> C<F> {
        C::new(re, im)
    }

    #[test]
    fn annihilation_small_dims() {
        let a = annihilation_op::<F>(2).unwrap();
        assert_eq!(a.matrix()[(0, 1)], cx(1.0, 0.0));
        assert_eq!(a.matrix()[(1, 0)], cx(0.0, 0.0));
        let a3 = annihilation_op::<F>(3).unwrap();
        assert!((a3.matrix()[(1, 2)].re - 1.41421356).abs() < 1e-8);
        assert!(matches!(
            annihilation_op::<F>(1),
            Err(Error::InvalidDimension(_))
        ));
    }

    #[test]
    fn number_identity_is_exact() {
        let a = annihilation_op::<F>(20).unwrap();
        let n = &a.adjoint() * &a;
        let exact = number_op::<F>(20).unwrap();
        for k in 0..20 {
            assert_eq!(exact.matrix()[(k, k)], cx(k as f64, 0.0));
            // √k·√k may be off by one ulp.
            assert!((n.matrix()[(k, k)].re - k as f64).abs() <= 4.0 * f64::EPSILON * k as f64);
        }
        assert!(n.max_abs_diff(&exact) < 1e-13);
    }

    #[test]
    fn canonical_commutator_below_top_level() {
        let a = annihilation_op::<F>(12).unwrap();
        let comm = a.commutator(&a.adjoint());
        for i in 0..12 {
            for j in 0..12 {
                let expect = if i == j && i < 11 {
                    1.0
                } else if i == j {
                    -11.0
                } else {
                    0.0
                };
                assert!((comm.matrix()[(i, j)].re - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn displacement_examples() {
        let d0 = displacement_op::<F>(10, cx(0.0, 0.0)).unwrap();
        assert!(d0.max_abs_diff(&Operator::identity(&[10])) < 1e-14);

        let d = displacement_op::<F>(40, cx(1.0, 0.0)).unwrap();
        let mut fact = 1.0f64;
        for n in 0..40 {
            if n > 0 {
                fact *= n as f64;
            }
            let expect = (-0.5f64).exp() / fact.sqrt();
            assert!(
                (d.matrix()[(n, 0)] - cx(expect, 0.0)).norm() < 1e-10,
                "n={n}"
            );
        }

        let beta = cx(2.0, 1.0);
        let dp = displacement_op::<F>(40, beta).unwrap();
        let dm = displacement_op::<F>(40, -beta).unwrap();
        assert!((&dp * &dm).max_abs_diff(&Operator::identity(&[40])) < 1e-8);
        assert!(dp.unitarity_error() < 1e-8);
    }

    #[test]
    fn displacement_guard() {
        // |β|² + 4|β| = 45 for β = 5.
        match displacement_op::<F>(20, cx(5.0, 0.0)) {
            Err(Error::Truncation { required, .. }) => assert_eq!(required, 46),
            other => panic!("expected truncation error, got {other:?}"),
        }
        assert!(displacement_op_with::<F>(20, cx(5.0, 0.0), Guard::Disabled).is_ok());
    }

    #[test]
    fn parity_examples() {
        let p = parity_op::<F>(2).unwrap();
        assert_eq!(p.matrix()[(0, 0)], cx(1.0, 0.0));
        assert_eq!(p.matrix()[(1, 1)], cx(-1.0, 0.0));

        let cat = cat_state::<F>(30, cx(2.0, 0.0), CatPhase::Plus).unwrap();
        assert!((cat.expect(&parity_op(30).unwrap()).re - 1.0).abs() < 1e-12);

        let coh = coherent_state::<F>(40, cx(1.5, 0.0)).unwrap();
        let val = coh.expect(&parity_op(40).unwrap()).re;
        assert!((val - (-4.5f64).exp()).abs() < 1e-10);
        assert!((val - 0.011109).abs() < 1e-6);
    }

    #[test]
    fn squeeze_examples() {
        let s0 = squeeze_op::<F>(10, 0.0).unwrap();
        assert!(s0.max_abs_diff(&Operator::identity(&[10])) < 1e-14);

        let dim = 60;
        let s = squeeze_op::<F>(dim, 0.5).unwrap();
        assert!(s.unitarity_error() < 1e-7);
        let vac = fock_state::<F>(dim, 0).unwrap();
        let sq = s.apply(&vac).unwrap();
        let a = annihilation_op::<F>(dim).unwrap();
        let x = (&a + &a.adjoint()).scale(cx(0.5, 0.0));
        let x2 = &x * &x;
        let var = sq.expect(&x2).re - sq.expect(&x).re.powi(2);
        assert!((var - (-1.0f64).exp() / 4.0).abs() < 1e-4, "var = {var}");

        let sm = squeeze_op::<F>(dim, -0.5).unwrap();
        assert!((&s * &sm).max_abs_diff(&Operator::identity(&[dim])) < 1e-7);
        assert!(squeeze_op::<F>(dim, 3.5).is_err());
    }

    #[test]
    fn state_constructors() {
        let cat = cat_state::<F>(30, cx(2.0, 0.0), CatPhase::Plus).unwrap();
        for n in (1..30).step_by(2) {
            assert!(cat.amplitudes()[n].norm() < 1e-15);
        }
        let coh = coherent_state::<F>(40, cx(1.5, 0.0)).unwrap();
        assert!((coh.amplitudes()[0].re - (-1.125f64).exp()).abs() < 1e-10);
        assert!((coh.amplitudes()[0].re - 0.32465).abs() < 1e-5);

        let tiny = cat_state::<F>(30, cx(1e-4, 0.0), CatPhase::Plus).unwrap();
        let vac = fock_state::<F>(30, 0).unwrap();
        assert!((tiny.inner(&vac).norm() - 1.0).abs() < 1e-6);

        assert!(fock_state::<F>(5, 5).is_err());
    }

    #[test]
    fn cat_normalization_matches_closed_form() {
        // Unnormalized |α⟩ ± |−α⟩ has norm² 2(1 ± e^{−2|α|²}).
        for &alpha in &[0.5, 1.0, 2.0, 3.0] {
            let dim = 60;
            let a = coherent_state::<F>(dim, cx(alpha, 0.0)).unwrap();
            let b = coherent_state::<F>(dim, cx(-alpha, 0.0)).unwrap();
            for (phase, sign) in [(CatPhase::Plus, 1.0), (CatPhase::Minus, -1.0)] {
                let cat = cat_state::<F>(dim, cx(alpha, 0.0), phase).unwrap();
                let n = 1.0 / (2.0 * (1.0 + sign * (-2.0 * alpha * alpha).exp())).sqrt();
                let proj = cat.inner(&a) + cx(sign, 0.0) * cat.inner(&b);
                assert!((proj.re * n - 1.0).abs() < 1e-10, "alpha={alpha}");
            }
        }
    }

    #[test]
    fn tensor_and_partial_trace() {
        let i2 = Operator::<F>::identity(&[2]);
        let i3 = Operator::<F>::identity(&[3]);
        let i6 = tensor(&i2, &i3);
        assert_eq!(i6.dims(), &[2, 3]);
        assert!(i6.max_abs_diff(&Operator::identity(&[2, 3])) < 1e-15);

        let a = coherent_state::<F>(8, cx(0.7, 0.2)).unwrap().to_density();
        let b = fock_state::<F>(3, 1).unwrap().to_density();
        let ab = a.tensor(&b);
        let ra = ab.partial_trace(0).unwrap();
        let rb = ab.partial_trace(1).unwrap();
        assert!((ra.matrix() - a.matrix()).norm() < 1e-12);
        assert!((rb.matrix() - b.matrix()).norm() < 1e-12);
        assert!((ab.partial_trace(0).unwrap().trace() - 1.0).abs() < 1e-10);

        // (|00⟩ + |11⟩)/√2 reduces to the maximally mixed qubit.
        let mut v = DVector::zeros(4);
        v[0] = cx(1.0, 0.0);
        v[3] = cx(1.0, 0.0);
        let bell = PureState::new(vec![2, 2], v).unwrap().to_density();
        let red = bell.partial_trace(1).unwrap();
        assert!((red.matrix() - DensityMatrix::<F>::mixed(&[2]).matrix()).norm() < 1e-12);
    }

    #[test]
    fn three_mode_partial_trace_middle() {
        let a = fock_state::<F>(2, 1).unwrap().to_density();
        let b = coherent_state::<F>(6, cx(0.5, 0.0)).unwrap().to_density();
        let q = DensityMatrix::<F>::mixed(&[2]);
        let abq = a.tensor(&b).tensor(&q);
        let rb = abq.partial_trace(1).unwrap();
        assert!((rb.matrix() - b.matrix()).norm() < 1e-12);
        assert!(abq.partial_trace(3).is_err());
    }

    #[test]
    fn embed_places_operator_on_mode() {
        let a = annihilation_op::<F>(3).unwrap();
        let am = a.embed(0, &[3, 2]).unwrap();
        let ab = a.embed(1, &[2, 3]).unwrap();
        assert!(am.max_abs_diff(&tensor(&a, &Operator::identity(&[2]))) < 1e-15);
        assert!(ab.max_abs_diff(&tensor(&Operator::identity(&[2]), &a)) < 1e-15);
        assert!(a.embed(1, &[3, 2]).is_err());
    }

    #[test]
    fn rotation_maps_rotated_coherent_state_back() {
        let dim = 40;
        let theta = 0.9;
        let beta = cx(1.3, -0.4);
        let rot = C::from_polar(1.0, theta);
        let psi = coherent_state::<F>(dim, beta * rot).unwrap();
        let out = rotation_op::<F>(dim, theta).unwrap().apply(&psi).unwrap();
        let target = coherent_state::<F>(dim, beta).unwrap();
        assert!((out.inner(&target).norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn density_validation() {
        let rho = fock_state::<F>(4, 2).unwrap().to_density();
        assert!(DensityMatrix::new(vec![4], rho.matrix().clone()).is_ok());
        let bad = rho.matrix().map(|z| z * cx(2.0, 0.0));
        assert!(DensityMatrix::new(vec![4], bad).is_err());
        let mix = DensityMatrix::<F>::fock_mixture(5, &[(2, 0.3), (3, 0.7)]).unwrap();
        assert!((mix.population(3) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn works_in_single_precision() {
        let a = annihilation_op::<f32>(6).unwrap();
        let n = &a.adjoint() * &a;
        assert_eq!(n.matrix()[(5, 5)].re, 5.0f32);
        let d = displacement_op::<f32>(20, C::new(0.5f32, 0.0)).unwrap();
        assert!(d.unitarity_error() < 1e-5);
    }
}
