//! Fixed-step Lindblad master-equation integrator.
//!
//! The model is `dρ/dt = −i[H(t), ρ] + Σ_k γ_k D[L_k]ρ` with
//! `D[L]ρ = LρL† − ½{L†L, ρ}`. Time is in ns and rates in rad/ns.
//!
//! Internally the Hamiltonian and jump operators are compiled to CSR form and
//! the right-hand side is evaluated as `−i(Y − Y†) + Σ γ L(Lρ)†` with
//! `Y = H_eff ρ` and `H_eff = H − (i/2) Σ γ L†L`, which is valid for the
//! Hermitian states the generator preserves.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fock::{DensityMatrix, Operator};
use crate::scalar::{c, cr, Real, C};

/// Complex envelope `t ↦ c(t)`.
pub type Coefficient<T> = Arc<dyn Fn(T) -> C<T> + Send + Sync>;

/// Time-dependent term `c(t) A + c(t)* A†`.
#[derive(Clone)]
pub struct Drive<T: Real> {
    pub op: Operator<T>,
    pub coeff: Coefficient<T>,
}

impl<T: Real> fmt::Debug for Drive<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Drive")
            .field("op", &self.op.label())
            .finish()
    }
}

/// `H(t) = H₀ + Σ_k (c_k(t) A_k + c_k(t)* A_k†)`.
#[derive(Clone, Debug)]
pub struct Hamiltonian<T: Real> {
    pub constant: Operator<T>,
    pub drives: Vec<Drive<T>>,
}

impl<T: Real> Hamiltonian<T> {
    pub fn new(constant: Operator<T>) -> Self {
        Self {
            constant,
            drives: Vec::new(),
        }
    }

    pub fn zero(dims: &[usize]) -> Self {
        Self::new(Operator::zeros(dims))
    }

    pub fn with_drive(
        mut self,
        op: Operator<T>,
        coeff: impl Fn(T) -> C<T> + Send + Sync + 'static,
    ) -> Self {
        self.drives.push(Drive {
            op,
            coeff: Arc::new(coeff),
        });
        self
    }

    /// Dense Hamiltonian at time `t`.
    pub fn at(&self, t: T) -> Operator<T> {
        let mut h = self.constant.clone();
        for d in &self.drives {
            let z = (d.coeff)(t);
            h = &h + &d.op.scale(z);
            h = &h + &d.op.adjoint().scale(z.conj());
        }
        h.with_label("H")
    }
}

/// Dissipation channel `rate · D[jump]`.
#[derive(Clone, Debug)]
pub struct Dissipator<T: Real> {
    pub rate: T,
    pub jump: Operator<T>,
    pub label: String,
}

impl<T: Real> Dissipator<T> {
    pub fn new(rate: T, jump: Operator<T>, label: impl Into<String>) -> Self {
        Self {
            rate,
            jump,
            label: label.into(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct LindbladModel<T: Real> {
    dims: Vec<usize>,
    hamiltonian: Hamiltonian<T>,
    dissipators: Vec<Dissipator<T>>,
}

impl<T: Real> LindbladModel<T> {
    pub fn new(
        dims: Vec<usize>,
        hamiltonian: Hamiltonian<T>,
        dissipators: Vec<Dissipator<T>>,
    ) -> Result<Self> {
        let n: usize = dims.iter().product();
        let check = |op: &Operator<T>, what: &str| -> Result<()> {
            if op.dim() != n {
                return Err(Error::DimensionMismatch(format!(
                    "{what} '{}' has size {}, model space is {n}",
                    op.label(),
                    op.dim()
                )));
            }
            Ok(())
        };
        check(&hamiltonian.constant, "Hamiltonian")?;
        for d in &hamiltonian.drives {
            check(&d.op, "drive operator")?;
        }
        for d in &dissipators {
            check(&d.jump, "jump operator")?;
            if !(d.rate >= T::zero()) || !d.rate.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "dissipator '{}' has rate {}",
                    d.label, d.rate
                )));
            }
        }
        Ok(Self {
            dims,
            hamiltonian,
            dissipators,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Same model with `op` added to the constant Hamiltonian.
    pub fn with_extra_hamiltonian(mut self, op: &Operator<T>) -> Result<Self> {
        if op.dims() != self.dims.as_slice() {
            return Err(Error::DimensionMismatch(format!(
                "extra Hamiltonian dims {:?} vs model {:?}",
                op.dims(),
                self.dims
            )));
        }
        let label = self.hamiltonian.constant.label().to_string();
        self.hamiltonian.constant = (&self.hamiltonian.constant + op).with_label(label);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn hamiltonian(&self) -> &Hamiltonian<T> {
        &self.hamiltonian
    }

    pub fn dissipators(&self) -> &[Dissipator<T>] {
        &self.dissipators
    }

    /// Dense right-hand side, for reference and testing.
    pub fn rhs_dense(&self, t: T, rho: &DensityMatrix<T>) -> DMatrix<C<T>> {
        let h = self.hamiltonian.at(t);
        let r = rho.matrix();
        let mi = c(T::zero(), -T::one());
        let mut out = (h.matrix() * r - r * h.matrix()).map(|z| z * mi);
        for d in &self.dissipators {
            out += dissipator_matrix(&d.jump, d.rate, r);
        }
        out
    }
}

fn max_row_sum<T: Real>(m: &DMatrix<C<T>>) -> T {
    let mut best = T::zero();
    for i in 0..m.nrows() {
        let s = m
            .row(i)
            .iter()
            .map(|z| crate::scalar::abs(*z))
            .fold(T::zero(), |a, b| a + b);
        if s > best {
            best = s;
        }
    }
    best
}

impl<T: Real> LindbladModel<T> {
    /// Upper bound on the generator's spectral radius over the given sample
    /// times, from row-sum norms of the Hamiltonian and of each `L†L`.
    pub fn rate_bound(&self, sample_times: &[T]) -> T {
        let two = T::lit(2.0);
        let mut bound = two * max_row_sum(self.hamiltonian.constant.matrix());
        for d in &self.hamiltonian.drives {
            let m = d.op.matrix();
            let norm = {
                let r = max_row_sum(m);
                let c = max_row_sum(&m.adjoint());
                if r > c {
                    r
                } else {
                    c
                }
            };
            let peak = sample_times
                .iter()
                .map(|&t| crate::scalar::abs((d.coeff)(t)))
                .fold(T::zero(), |a, b| if b > a { b } else { a });
            bound += two * two * peak * norm;
        }
        for d in &self.dissipators {
            let l = d.jump.matrix();
            bound += d.rate * max_row_sum(&(l.adjoint() * l));
        }
        bound
    }
}

/// Largest `|λ·dt|` allowed by the automatic step subdivision; inside the
/// RK4 stability region in every direction of the left half-plane.
const RK4_STABLE_RADIUS: f64 = 2.5;

fn dissipator_matrix<T: Real>(l: &Operator<T>, rate: T, r: &DMatrix<C<T>>) -> DMatrix<C<T>> {
    let lm = l.matrix();
    let ld = lm.adjoint();
    let ldl = &ld * lm;
    let half = cr(T::lit(0.5));
    let out = lm * r * &ld - (&ldl * r + r * &ldl).map(|z| z * half);
    out.map(|z| z * cr(rate))
}

/// `rate · (LρL† − ½L†Lρ − ½ρL†L)`.
pub fn dissipator_apply<T: Real>(
    l: &Operator<T>,
    rate: T,
    rho: &DensityMatrix<T>,
) -> Result<DMatrix<C<T>>> {
    if l.dim() != rho.dim() {
        return Err(Error::DimensionMismatch(format!(
            "jump operator of size {} applied to state of size {}",
            l.dim(),
            rho.dim()
        )));
    }
    Ok(dissipator_matrix(l, rate, rho.matrix()))
}

/// Compressed sparse row matrix.
#[derive(Clone, Debug)]
struct Csr<T: Real> {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<C<T>>,
}

impl<T: Real> Csr<T> {
    fn from_dense(m: &DMatrix<C<T>>) -> Self {
        let n = m.nrows();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for i in 0..n {
            for j in 0..m.ncols() {
                let z = m[(i, j)];
                if z.re != T::zero() || z.im != T::zero() {
                    cols.push(j);
                    vals.push(z);
                }
            }
            row_ptr.push(cols.len());
        }
        Self {
            row_ptr,
            cols,
            vals,
        }
    }

    fn n(&self) -> usize {
        self.row_ptr.len() - 1
    }

    fn position(&self, i: usize, j: usize) -> Option<usize> {
        (self.row_ptr[i]..self.row_ptr[i + 1]).find(|&p| self.cols[p] == j)
    }

    /// Pattern union of several matrices (values zeroed).
    fn union(parts: &[&Csr<T>]) -> Self {
        let n = parts[0].n();
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        for i in 0..n {
            let mut row: Vec<usize> = parts
                .iter()
                .flat_map(|p| p.cols[p.row_ptr[i]..p.row_ptr[i + 1]].iter().copied())
                .collect();
            row.sort_unstable();
            row.dedup();
            cols.extend(row);
            row_ptr.push(cols.len());
        }
        let vals = vec![C::new(T::zero(), T::zero()); cols.len()];
        Self {
            row_ptr,
            cols,
            vals,
        }
    }

    /// Positions of `other`'s entries inside `self`'s pattern.
    fn index_map(&self, other: &Csr<T>) -> Vec<usize> {
        let mut map = Vec::with_capacity(other.vals.len());
        for i in 0..other.n() {
            for p in other.row_ptr[i]..other.row_ptr[i + 1] {
                map.push(
                    self.position(i, other.cols[p])
                        .expect("pattern is a superset"),
                );
            }
        }
        map
    }

    /// `out (+)= A x` for row-major dense `x` (n × n).
    fn mul_dense(&self, x: &[C<T>], out: &mut [C<T>], accumulate: bool) {
        let n = self.n();
        if !accumulate {
            out.iter_mut()
                .for_each(|z| *z = C::new(T::zero(), T::zero()));
        }
        for i in 0..n {
            let row_out = &mut out[i * n..(i + 1) * n];
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                let a = self.vals[p];
                let k = self.cols[p];
                let row_x = &x[k * n..(k + 1) * n];
                for (o, v) in row_out.iter_mut().zip(row_x) {
                    *o += a * *v;
                }
            }
        }
    }

    /// `Tr(A ρ)` for row-major dense `ρ`.
    fn trace_product(&self, rho: &[C<T>]) -> C<T> {
        let n = self.n();
        let mut acc = C::new(T::zero(), T::zero());
        for i in 0..n {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[p] * rho[self.cols[p] * n + i];
            }
        }
        acc
    }
}

struct CompiledDrive<T: Real> {
    coeff: Coefficient<T>,
    op: Csr<T>,
    op_map: Vec<usize>,
    adj: Csr<T>,
    adj_map: Vec<usize>,
}

/// CSR form of a model ready for repeated right-hand-side evaluation.
struct Compiled<T: Real> {
    n: usize,
    base: Csr<T>,
    base_map: Vec<usize>,
    heff: Csr<T>,
    drives: Vec<CompiledDrive<T>>,
    jumps: Vec<(T, Csr<T>)>,
    z: Vec<C<T>>,
    zt: Vec<C<T>>,
}

impl<T: Real> Compiled<T> {
    fn new(model: &LindbladModel<T>) -> Self {
        let n = model.dim();
        let mut base_dense = model.hamiltonian.constant.matrix().clone();
        let half_i = c(T::zero(), T::lit(0.5));
        let mut jumps = Vec::new();
        for d in &model.dissipators {
            if d.rate == T::zero() {
                continue;
            }
            let l = d.jump.matrix();
            let ldl = l.adjoint() * l;
            base_dense -= ldl.map(|z| z * half_i * cr(d.rate));
            jumps.push((d.rate, Csr::from_dense(l)));
        }
        let base = Csr::from_dense(&base_dense);
        let drive_parts: Vec<(Coefficient<T>, Csr<T>, Csr<T>)> = model
            .hamiltonian
            .drives
            .iter()
            .map(|d| {
                (
                    d.coeff.clone(),
                    Csr::from_dense(d.op.matrix()),
                    Csr::from_dense(&d.op.matrix().adjoint()),
                )
            })
            .collect();
        let mut parts: Vec<&Csr<T>> = vec![&base];
        for (_, a, b) in &drive_parts {
            parts.push(a);
            parts.push(b);
        }
        let heff = Csr::union(&parts);
        let base_map = heff.index_map(&base);
        let drives = drive_parts
            .into_iter()
            .map(|(coeff, op, adj)| {
                let op_map = heff.index_map(&op);
                let adj_map = heff.index_map(&adj);
                CompiledDrive {
                    coeff,
                    op,
                    op_map,
                    adj,
                    adj_map,
                }
            })
            .collect();
        Self {
            n,
            base,
            base_map,
            heff,
            drives,
            jumps,
            z: vec![C::new(T::zero(), T::zero()); n * n],
            zt: vec![C::new(T::zero(), T::zero()); n * n],
        }
    }

    fn update_heff(&mut self, t: T) {
        let zero = C::new(T::zero(), T::zero());
        self.heff.vals.iter_mut().for_each(|v| *v = zero);
        for (p, &q) in self.base_map.iter().enumerate() {
            self.heff.vals[q] += self.base.vals[p];
        }
        for d in &self.drives {
            let z = (d.coeff)(t);
            let zc = z.conj();
            for (p, &q) in d.op_map.iter().enumerate() {
                self.heff.vals[q] += d.op.vals[p] * z;
            }
            for (p, &q) in d.adj_map.iter().enumerate() {
                self.heff.vals[q] += d.adj.vals[p] * zc;
            }
        }
    }

    /// Writes `dρ/dt` at time `t` into `out` (all row-major).
    fn rhs(&mut self, t: T, rho: &[C<T>], out: &mut [C<T>]) {
        let n = self.n;
        self.update_heff(t);
        // Y = H_eff ρ into z.
        self.heff.mul_dense(rho, &mut self.z, false);
        let mi = c(T::zero(), -T::one());
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = (self.z[i * n + j] - self.z[j * n + i].conj()) * mi;
            }
        }
        for (rate, l) in &self.jumps {
            l.mul_dense(rho, &mut self.z, false);
            let g = cr(*rate);
            for i in 0..n {
                for j in 0..n {
                    self.zt[i * n + j] = self.z[j * n + i].conj() * g;
                }
            }
            l.mul_dense(&self.zt, out, true);
        }
    }
}

/// Named observable recorded during evolution.
#[derive(Clone, Debug)]
pub struct Observable<T: Real> {
    pub name: String,
    pub op: Operator<T>,
}

impl<T: Real> Observable<T> {
    pub fn new(name: impl Into<String>, op: Operator<T>) -> Self {
        Self {
            name: name.into(),
            op,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EvolveOptions<T: Real> {
    /// Nominal step; the actual step divides the span into an integer count.
    pub dt: T,
    pub observables: Vec<Observable<T>>,
    /// Record observables every this many steps (and always at the end).
    pub record_every: usize,
    /// Store full states every this many steps; 0 disables storage.
    pub store_every: usize,
    /// Subdivide `dt` when the model's rate bound makes it unstable.
    pub auto_substep: bool,
}

impl<T: Real> EvolveOptions<T> {
    pub fn new(dt: T) -> Self {
        Self {
            dt,
            observables: Vec::new(),
            record_every: 1,
            store_every: 10,
            auto_substep: true,
        }
    }

    pub fn observe(mut self, name: impl Into<String>, op: Operator<T>) -> Self {
        self.observables.push(Observable::new(name, op));
        self
    }

    pub fn record_every(mut self, k: usize) -> Self {
        self.record_every = k.max(1);
        self
    }

    pub fn store_every(mut self, k: usize) -> Self {
        self.store_every = k;
        self
    }

    pub fn auto_substep(mut self, on: bool) -> Self {
        self.auto_substep = on;
        self
    }
}

/// Result of [`evolve`].
#[derive(Clone, Debug)]
pub struct Trajectory<T: Real> {
    pub times: Vec<T>,
    pub records: BTreeMap<String, Vec<C<T>>>,
    pub state_times: Vec<T>,
    pub states: Vec<DensityMatrix<T>>,
    pub final_state: DensityMatrix<T>,
    /// Largest `|Tr ρ − 1|` seen over the run.
    pub max_trace_drift: T,
}

impl<T: Real> Trajectory<T> {
    pub fn record(&self, name: &str) -> Option<&[C<T>]> {
        self.records.get(name).map(|v| v.as_slice())
    }

    /// Real parts of a record.
    pub fn record_re(&self, name: &str) -> Option<Vec<T>> {
        self.record(name).map(|v| v.iter().map(|z| z.re).collect())
    }
}

const TRACE_DRIFT_LIMIT: f64 = 1e-4;

fn to_row_major<T: Real>(m: &DMatrix<C<T>>) -> Vec<C<T>> {
    m.transpose().as_slice().to_vec()
}

fn symmetrize<T: Real>(rho: &mut [C<T>], n: usize) {
    let half = cr(T::lit(0.5));
    for i in 0..n {
        for j in 0..i {
            let avg = (rho[i * n + j] + rho[j * n + i].conj()) * half;
            rho[i * n + j] = avg;
            rho[j * n + i] = avg.conj();
        }
        let d = rho[i * n + i];
        rho[i * n + i] = cr(d.re);
    }
}

fn trace<T: Real>(rho: &[C<T>], n: usize) -> T {
    (0..n)
        .map(|i| rho[i * n + i].re)
        .fold(T::zero(), |a, b| a + b)
}

/// Integrates the master equation with classical RK4 over `t_span`.
pub fn evolve<T: Real>(
    model: &LindbladModel<T>,
    rho0: &DensityMatrix<T>,
    t_span: (T, T),
    options: &EvolveOptions<T>,
) -> Result<Trajectory<T>> {
    let n = model.dim();
    if rho0.dim() != n {
        return Err(Error::DimensionMismatch(format!(
            "initial state has size {}, model space is {n}",
            rho0.dim()
        )));
    }
    if !(options.dt > T::zero()) {
        return Err(Error::InvalidParameter(format!(
            "dt must be positive, got {}",
            options.dt
        )));
    }
    let (t0, t1) = t_span;
    if !(t1 >= t0) {
        return Err(Error::InvalidParameter(format!(
            "empty time span ({t0}, {t1})"
        )));
    }
    for o in &options.observables {
        if o.op.dim() != n {
            return Err(Error::DimensionMismatch(format!(
                "observable '{}' has size {}, model space is {n}",
                o.name,
                o.op.dim()
            )));
        }
    }
    let span = t1 - t0;
    let nominal = {
        let raw = (span / options.dt).to_f64();
        if raw <= 0.0 {
            0
        } else {
            (raw - 1e-9).ceil().max(1.0) as usize
        }
    };
    // Observables and states are sampled on the nominal grid; each nominal
    // step is split into `sub` equal RK4 steps when the model is stiff.
    let sub = if options.auto_substep && nominal > 0 {
        let h = span / T::lit(nominal as f64);
        let samples: Vec<T> = (0..=nominal.min(2000))
            .map(|k| t0 + span * T::lit(k as f64 / nominal.min(2000) as f64))
            .collect();
        let bound = model.rate_bound(&samples).to_f64();
        let sub = (bound * h.to_f64() / RK4_STABLE_RADIUS).ceil().max(1.0) as usize;
        if sub > 1 {
            log::debug!(
                "rate bound {bound:.3e}/ns: splitting dt = {} into {sub} substeps",
                h
            );
        }
        sub
    } else {
        1
    };
    let steps = nominal;
    let dt_nominal = if steps == 0 {
        T::zero()
    } else {
        span / T::lit(steps as f64)
    };
    let dt = dt_nominal / T::lit(sub as f64);

    let mut compiled = Compiled::new(model);
    let obs: Vec<(String, Csr<T>)> = options
        .observables
        .iter()
        .map(|o| (o.name.clone(), Csr::from_dense(o.op.matrix())))
        .collect();

    let zero = C::new(T::zero(), T::zero());
    let mut rho = to_row_major(rho0.matrix());
    let mut k1 = vec![zero; n * n];
    let mut k2 = vec![zero; n * n];
    let mut k3 = vec![zero; n * n];
    let mut k4 = vec![zero; n * n];
    let mut tmp = vec![zero; n * n];

    let mut times = Vec::new();
    let mut records: BTreeMap<String, Vec<C<T>>> =
        obs.iter().map(|(k, _)| (k.clone(), Vec::new())).collect();
    let mut state_times = Vec::new();
    let mut states = Vec::new();
    let dims = model.dims.clone();

    let record =
        |t: T, rho: &[C<T>], times: &mut Vec<T>, records: &mut BTreeMap<String, Vec<C<T>>>| {
            times.push(t);
            for (name, op) in &obs {
                records
                    .get_mut(name)
                    .expect("record exists")
                    .push(op.trace_product(rho));
            }
        };
    let snapshot = |rho: &[C<T>]| -> DensityMatrix<T> {
        DensityMatrix::from_matrix(dims.clone(), DMatrix::from_row_slice(n, n, rho))
            .expect("shape is fixed")
    };

    record(t0, &rho, &mut times, &mut records);
    if options.store_every > 0 {
        state_times.push(t0);
        states.push(snapshot(&rho));
    }

    let tr0 = trace(&rho, n);
    let mut max_drift = (tr0 - T::one()).abs();
    let half = T::lit(0.5);
    let sixth = T::one() / T::lit(6.0);
    for step in 0..steps {
        for s_idx in 0..sub {
            let t = t0 + dt_nominal * T::lit(step as f64) + dt * T::lit(s_idx as f64);
            compiled.rhs(t, &rho, &mut k1);
            for ((o, r), k) in tmp.iter_mut().zip(&rho).zip(&k1) {
                *o = *r + *k * cr(dt * half);
            }
            compiled.rhs(t + dt * half, &tmp, &mut k2);
            for ((o, r), k) in tmp.iter_mut().zip(&rho).zip(&k2) {
                *o = *r + *k * cr(dt * half);
            }
            compiled.rhs(t + dt * half, &tmp, &mut k3);
            for ((o, r), k) in tmp.iter_mut().zip(&rho).zip(&k3) {
                *o = *r + *k * cr(dt);
            }
            compiled.rhs(t + dt, &tmp, &mut k4);
            let w = cr(dt * sixth);
            let two = cr(T::lit(2.0));
            for i in 0..n * n {
                rho[i] += (k1[i] + (k2[i] + k3[i]) * two + k4[i]) * w;
            }
            symmetrize(&mut rho, n);
        }

        let t_next = t0 + dt_nominal * T::lit((step + 1) as f64);
        let tr = trace(&rho, n);
        if !tr.is_finite() || rho.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Divergence {
                time: t_next.to_f64(),
            });
        }
        let drift = (tr - T::one()).abs();
        if drift > max_drift {
            max_drift = drift;
        }
        if (tr - tr0).abs().to_f64() > TRACE_DRIFT_LIMIT {
            return Err(Error::StepSize {
                drift: (tr - tr0).abs().to_f64(),
                time: t_next.to_f64(),
                dt: dt_nominal.to_f64(),
            });
        }
        let last = step + 1 == steps;
        if (step + 1) % options.record_every == 0 || last {
            record(t_next, &rho, &mut times, &mut records);
        }
        if options.store_every > 0 && ((step + 1) % options.store_every == 0 || last) {
            state_times.push(t_next);
            states.push(snapshot(&rho));
        }
    }

    Ok(Trajectory {
        times,
        records,
        state_times,
        states,
        final_state: snapshot(&rho),
        max_trace_drift: max_drift,
    })
}

/// True iff the named record varies by less than `tol` (max − min of the real
/// part) over the trailing `window` ns.
pub fn steady_state_reached<T: Real>(
    traj: &Trajectory<T>,
    observable: &str,
    window: T,
    tol: T,
) -> Result<bool> {
    let rec = traj
        .record(observable)
        .ok_or_else(|| Error::EmptyRecord(format!("no record named '{observable}'")))?;
    if rec.is_empty() || traj.times.is_empty() {
        return Err(Error::EmptyRecord(observable.to_string()));
    }
    let t_end = *traj.times.last().expect("non-empty");
    if t_end - traj.times[0] < window {
        return Err(Error::InvalidParameter(format!(
            "trajectory spans {} ns, shorter than window {window} ns",
            (t_end - traj.times[0])
        )));
    }
    let start = t_end - window;
    let mut lo = None::<T>;
    let mut hi = None::<T>;
    for (t, v) in traj.times.iter().zip(rec) {
        if *t + T::lit(1e-9) >= start {
            lo = Some(lo.map_or(v.re, |x: T| if v.re < x { v.re } else { x }));
            hi = Some(hi.map_or(v.re, |x: T| if v.re > x { v.re } else { x }));
        }
    }
    match (lo, hi) {
        (Some(lo), Some(hi)) => Ok(hi - lo < tol),
        _ => Err(Error::EmptyRecord(observable.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{annihilation_op, cat_state, fock_state, number_op, parity_op, CatPhase};

    type F = f64;

    fn zero_model(dims: Vec<usize>, diss: Vec<Dissipator<F>>) -> LindbladModel<F> {
        let h = Hamiltonian::zero(&dims);
        LindbladModel::new(dims, h, diss).unwrap()
    }

    #[test]
    fn single_photon_decay_generator() {
        let a = annihilation_op::<F>(4).unwrap();
        let rho = fock_state::<F>(4, 1).unwrap().to_density();
        let d = dissipator_apply(&a, 1.0, &rho).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expect = match (i, j) {
                    (0, 0) => 1.0,
                    (1, 1) => -1.0,
                    _ => 0.0,
                };
                assert!((d[(i, j)] - C::new(expect, 0.0)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn dephasing_preserves_diagonal_states() {
        let n = number_op::<F>(5).unwrap();
        let rho = DensityMatrix::fock_mixture(5, &[(0, 0.2), (2, 0.5), (4, 0.3)]).unwrap();
        let d = dissipator_apply(&n, 0.7, &rho).unwrap();
        assert!(d.norm() < 1e-15);
    }

    #[test]
    fn two_photon_generator_preserves_parity() {
        let a = annihilation_op::<F>(30).unwrap();
        let a2 = &a * &a;
        let rho = cat_state::<F>(30, C::new(2.0, 0.0), CatPhase::Plus)
            .unwrap()
            .to_density();
        let d = dissipator_apply(&a2, 1.0, &rho).unwrap();
        let p = parity_op::<F>(30).unwrap();
        let val = (p.matrix() * &d).trace();
        assert!(val.norm() < 1e-12);
        assert!(d.trace().norm() < 1e-10);
    }

    #[test]
    fn compiled_rhs_matches_dense() {
        let dims = vec![6, 3];
        let a = annihilation_op::<F>(6).unwrap().embed(0, &dims).unwrap();
        let b = annihilation_op::<F>(3).unwrap().embed(1, &dims).unwrap();
        let nm = &a.adjoint() * &a;
        let h0 = (&(&nm * &nm).scale(C::new(-0.1, 0.0))
            + &(&(&a * &a) * &b.adjoint()).scale(C::new(0.3, 0.0)))
            .with_label("H0");
        let h0 = &h0 + &h0.adjoint();
        let ham = Hamiltonian::new(h0).with_drive(b.clone(), |t: F| C::from_polar(0.2, 0.3 * t));
        let diss = vec![
            Dissipator::new(0.5, b.clone(), "b"),
            Dissipator::new(0.01, a.clone(), "a"),
            Dissipator::new(0.02, nm.clone(), "deph"),
        ];
        let model = LindbladModel::new(dims.clone(), ham, diss).unwrap();
        let psi = crate::fock::coherent_state::<F>(6, C::new(0.4, 0.3))
            .unwrap()
            .tensor(&crate::fock::coherent_state::<F>(3, C::new(0.1, -0.2)).unwrap());
        let rho = psi.to_density();
        let mut compiled = Compiled::new(&model);
        let mut out = vec![C::new(0.0, 0.0); 18 * 18];
        compiled.rhs(1.7, &to_row_major(rho.matrix()), &mut out);
        let dense = model.rhs_dense(1.7, &rho);
        let fast = DMatrix::from_row_slice(18, 18, &out);
        assert!((fast - dense).norm() < 1e-12);
    }

    #[test]
    fn free_evolution_is_identity() {
        let rho = cat_state::<F>(10, C::new(1.0, 0.0), CatPhase::Minus)
            .unwrap()
            .to_density();
        let model = zero_model(vec![10], vec![]);
        let traj = evolve(&model, &rho, (0.0, 50.0), &EvolveOptions::new(1.0)).unwrap();
        assert!((traj.final_state.matrix() - rho.matrix()).norm() < 1e-14);
    }

    #[test]
    fn single_photon_decay_matches_lifetime() {
        let kappa1 = 2.0 * std::f64::consts::PI * 14e-6;
        // 1/e time 1/(2π·14 kHz) ≈ 11.4 μs, quoted as about 11 μs.
        let t_e = 1.0 / kappa1;
        assert!((t_e / 1000.0 - 11.0).abs() < 0.5);
        let a = annihilation_op::<F>(3).unwrap();
        let model = zero_model(vec![3], vec![Dissipator::new(kappa1, a, "k1")]);
        let rho = fock_state::<F>(3, 1).unwrap().to_density();
        let p1 = fock_state::<F>(3, 1).unwrap().to_density();
        let proj = Operator::new(vec![3], p1.matrix().clone(), "|1><1|").unwrap();
        let opts = EvolveOptions::new(1.0)
            .observe("p1", proj)
            .record_every(100);
        let traj = evolve(&model, &rho, (0.0, 5000.0), &opts).unwrap();
        for (t, v) in traj.times.iter().zip(traj.record("p1").unwrap()) {
            assert!((v.re - (-kappa1 * t).exp()).abs() < 1e-10);
        }
    }

    #[test]
    fn rabi_oscillation() {
        let omega = 0.3;
        let sm = annihilation_op::<F>(2).unwrap();
        let sx = &sm + &sm.adjoint();
        let h = sx.scale(C::new(omega / 2.0, 0.0));
        let model = LindbladModel::new(vec![2], Hamiltonian::new(h), vec![]).unwrap();
        let rho = fock_state::<F>(2, 0).unwrap().to_density();
        let pe = number_op::<F>(2).unwrap();
        let opts = EvolveOptions::new(0.05).observe("pe", pe);
        let traj = evolve(&model, &rho, (0.0, 40.0), &opts).unwrap();
        for (t, v) in traj.times.iter().zip(traj.record("pe").unwrap()) {
            assert!((v.re - (omega * t / 2.0).sin().powi(2)).abs() < 1e-7);
        }
    }

    #[test]
    fn drive_coefficients_enter_hermitian_pair() {
        // H = c σ₋ + c* σ₊ with c = Ω/2 is the Rabi Hamiltonian above.
        let omega = 0.3;
        let sm = annihilation_op::<F>(2).unwrap();
        let ham = Hamiltonian::zero(&[2]).with_drive(sm, move |_t: F| C::new(omega / 2.0, 0.0));
        let model = LindbladModel::new(vec![2], ham, vec![]).unwrap();
        let rho = fock_state::<F>(2, 0).unwrap().to_density();
        let traj = evolve(&model, &rho, (0.0, 7.0), &EvolveOptions::new(0.05)).unwrap();
        let pe = traj.final_state.population(1);
        assert!((pe - (omega * 7.0 / 2.0).sin().powi(2)).abs() < 1e-7);
    }

    #[test]
    fn non_integer_span_is_covered_exactly() {
        let model = zero_model(vec![2], vec![]);
        let rho = fock_state::<F>(2, 0).unwrap().to_density();
        let traj = evolve(&model, &rho, (0.0, 1.05), &EvolveOptions::new(0.1)).unwrap();
        assert!((traj.times.last().unwrap() - 1.05).abs() < 1e-12);
        assert_eq!(traj.times.len(), 12);
    }

    #[test]
    fn oversized_step_reports_step_size_error() {
        let a = annihilation_op::<F>(6).unwrap();
        let model = zero_model(vec![6], vec![Dissipator::new(10.0, &a * &a, "k2")]);
        let rho = fock_state::<F>(6, 5).unwrap().to_density();
        let traj = evolve(&model, &rho, (0.0, 10.0), &EvolveOptions::new(1.0)).unwrap();
        assert!(traj.max_trace_drift < 1e-8);
        let fixed = EvolveOptions::new(1.0).auto_substep(false);
        match evolve(&model, &rho, (0.0, 10.0), &fixed) {
            Err(Error::StepSize { .. }) | Err(Error::Divergence { .. }) => {}
            other => panic!(
                "expected a step-size failure, got {:?}",
                other.map(|t| t.max_trace_drift)
            ),
        }
    }

    #[test]
    fn rejects_bad_models() {
        let a = annihilation_op::<F>(3).unwrap();
        assert!(LindbladModel::new(
            vec![3],
            Hamiltonian::zero(&[3]),
            vec![Dissipator::new(-1.0, a.clone(), "x")]
        )
        .is_err());
        assert!(LindbladModel::new(vec![4], Hamiltonian::<F>::zero(&[3]), vec![]).is_err());
        let model = zero_model(vec![3], vec![]);
        let rho = fock_state::<F>(2, 0).unwrap().to_density();
        assert!(evolve(&model, &rho, (0.0, 1.0), &EvolveOptions::new(0.1)).is_err());
    }

    #[test]
    fn steady_state_detection() {
        let mut traj = Trajectory::<F> {
            times: (0..100).map(|k| k as f64).collect(),
            records: BTreeMap::new(),
            state_times: vec![],
            states: vec![],
            final_state: DensityMatrix::mixed(&[2]),
            max_trace_drift: 0.0,
        };
        traj.records
            .insert("flat".into(), vec![C::new(2.0, 0.0); 100]);
        traj.records.insert(
            "ramp".into(),
            (0..100).map(|k| C::new(k as f64 * 0.01, 0.0)).collect(),
        );
        assert!(steady_state_reached(&traj, "flat", 20.0, 1e-3).unwrap());
        assert!(!steady_state_reached(&traj, "ramp", 20.0, 1e-3).unwrap());
        assert!(matches!(
            steady_state_reached(&traj, "missing", 20.0, 1e-3),
            Err(Error::EmptyRecord(_))
        ));
        assert!(steady_state_reached(&traj, "flat", 200.0, 1e-3).is_err());
    }

    #[test]
    fn single_precision_decay() {
        let a = annihilation_op::<f32>(3).unwrap();
        let h = Hamiltonian::zero(&[3]);
        let model = LindbladModel::new(vec![3], h, vec![Dissipator::new(0.01f32, a, "k")]).unwrap();
        let rho = fock_state::<f32>(3, 1).unwrap().to_density();
        let traj = evolve(&model, &rho, (0.0, 100.0), &EvolveOptions::new(1.0)).unwrap();
        assert!((traj.final_state.population(1) - (-1.0f32).exp()).abs() < 1e-4);
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use crate::fock::{annihilation_op, fock_state, parity_op};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn random_matrix(rng: &mut rand_chacha::ChaCha8Rng, n: usize) -> DMatrix<C<f64>> {
        DMatrix::from_fn(n, n, |_, _| C::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn random_models_keep_rho_physical(seed in any::<u64>(), g1 in 0.0f64..0.3, g2 in 0.0f64..0.3) {
            let n = 4;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let h = random_matrix(&mut rng, n);
            let h = Operator::new(vec![n], (&h + h.adjoint()) * C::new(0.1, 0.0), "H").unwrap();
            let l1 = Operator::new(vec![n], random_matrix(&mut rng, n), "L1").unwrap();
            let l2 = Operator::new(vec![n], random_matrix(&mut rng, n), "L2").unwrap();
            let model = LindbladModel::new(
                vec![n],
                Hamiltonian::new(h),
                vec![Dissipator::new(g1, l1, "L1"), Dissipator::new(g2, l2, "L2")],
            )
            .unwrap();
            let g = random_matrix(&mut rng, n);
            let m = &g * g.adjoint();
            let tr = m.trace();
            let rho0 = DensityMatrix::new(vec![n], m / tr).unwrap();
            let traj = evolve(&model, &rho0, (0.0, 20.0), &EvolveOptions::new(0.1).store_every(10)).unwrap();
            prop_assert!(traj.max_trace_drift <= 1e-6);
            for s in &traj.states {
                prop_assert!(s.min_eigenvalue() >= -1e-6);
                prop_assert!(s.hermiticity_error() <= 1e-12);
            }
        }

        #[test]
        fn two_photon_dissipation_conserves_parity(alpha in 0.5f64..2.5, level in 0usize..10) {
            let dim = 24;
            let a = annihilation_op::<f64>(dim).unwrap();
            let jump = &(&a * &a) - &Operator::identity(&[dim]).scale(C::new(alpha * alpha, 0.0));
            let model = LindbladModel::new(
                vec![dim],
                Hamiltonian::zero(&[dim]),
                vec![Dissipator::new(0.0136, jump, "two-photon")],
            )
            .unwrap();
            let parity = parity_op::<f64>(dim).unwrap();
            let rho0 = fock_state::<f64>(dim, level).unwrap().to_density();
            let p0 = rho0.expect(&parity).re;
            let traj = evolve(&model, &rho0, (0.0, 200.0), &EvolveOptions::new(1.0).store_every(20)).unwrap();
            for s in &traj.states {
                prop_assert!((s.expect(&parity).re - p0).abs() <= 1e-6);
            }
        }
    }
}
