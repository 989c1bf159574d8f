//! Executes a loaded scenario and renders its outputs in memory.

use std::fmt::Write as _;
use std::sync::Arc;

use catsim::device::{build_bipartite_model, build_reduced_model, mhz_to_rad_per_ns, FluxSetting, ReducedOptions};
use catsim::fock::{cat_state, fock_state, number_op, parity_op, CatPhase, Operator, PureState};
use catsim::gates::{
    calibrate_z, calibrate_zeno_y, optimize_pulse, x_gate_error, z_phase, z_rotation, zeno_y, GateSettings, XGate,
    ZenoY,
};
use catsim::lindblad::{evolve, Coefficient, EvolveOptions};
use catsim::reconstruct::{bloch_vector, logical_bloch, mle_logical, trace_distance, LogicalBasis, LogicalState};
use catsim::squeeze::{integrate_amplitudes, squeeze_sweep};
use catsim::wigner::{tomography, wigner_map, Protocol, WignerMap};
use catsim::{Complex, DensityMatrix};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::error::CliError;
use crate::scenario::{
    Experiment, GateXSettings, GateYSettings, GateZSettings, Loaded, ModelKind, PulseSettings, ReconstructSettings,
    SqueezeSettings, StabilizeSettings, TomographySettings,
};

type Res<T> = Result<T, CliError>;

/// A file to be written under the output directory.
#[derive(Clone, Debug, PartialEq)]
pub struct Output {
    pub file_name: String,
    pub contents: String,
}

/// Metadata shared by every output of one run.
pub struct Meta {
    value: Value,
    name: String,
}

impl Meta {
    pub fn new(loaded: &Loaded) -> Self {
        let value = json!({
            "toolkit": "catsim",
            "version": env!("CARGO_PKG_VERSION"),
            "scenario": loaded.scenario.name,
            "kind": loaded.scenario.kind,
            "scenario_sha256": loaded.hash(),
            "dims": loaded.scenario.dims,
            "seed": loaded.scenario.seed,
            "params": loaded.params,
        });
        Self {
            value,
            name: loaded.scenario.name.clone(),
        }
    }

    /// CSV body behind `#` comment lines carrying the metadata.
    fn csv(&self, suffix: &str, body: &str) -> Output {
        let mut s = String::new();
        for key in ["toolkit", "version", "scenario", "kind", "scenario_sha256", "dims", "seed"] {
            let v = &self.value[key];
            let text = v.as_str().map(str::to_string).unwrap_or_else(|| v.to_string());
            let _ = writeln!(s, "# {key}: {text}");
        }
        let _ = writeln!(s, "# params: {}", self.value["params"]);
        s.push_str(body);
        Output {
            file_name: format!("{}.{suffix}", self.name),
            contents: s,
        }
    }

    fn json(&self, suffix: &str, result: Value) -> Output {
        let doc = json!({ "metadata": self.value, "result": result });
        Output {
            file_name: format!("{}.{suffix}", self.name),
            contents: serde_json::to_string_pretty(&doc).expect("json values serialize") + "\n",
        }
    }
}

fn to_value<T: serde::Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("results serialize")
}

fn protocol_name(p: Protocol) -> &'static str {
    match p {
        Protocol::Ideal => "ideal",
        Protocol::Ramsey => "ramsey",
        Protocol::RamseyEnhanced => "ramsey_enhanced",
    }
}

fn projector(psi: &PureState<f64>) -> Res<Operator<f64>> {
    let a = psi.amplitudes();
    Ok(Operator::new(psi.dims().to_vec(), a * a.adjoint(), "projector")?)
}

/// Value of the map at the grid point nearest the origin.
fn origin_value(map: &WignerMap) -> (Complex, f64) {
    let (ni, nr) = map.shape();
    let mut best = (Complex::new(0.0, 0.0), f64::NAN, f64::INFINITY);
    for j in 0..ni {
        for i in 0..nr {
            let b = map.beta(i, j);
            if b.norm() < best.2 {
                best = (b, map.at(i, j), b.norm());
            }
        }
    }
    (best.0, best.1)
}

pub fn run(loaded: &Loaded) -> Res<Vec<Output>> {
    loaded.validate()?;
    let meta = Meta::new(loaded);
    match &loaded.experiment {
        Experiment::Stabilize(s) => stabilize(loaded, &meta, s),
        Experiment::Tomography(s) => tomography_run(loaded, &meta, s),
        Experiment::GateXSweep(s) => gate_x(loaded, &meta, s),
        Experiment::GateY(s) => gate_y(loaded, &meta, s),
        Experiment::GateZ(s) => gate_z(loaded, &meta, s),
        Experiment::OptimizePulse(s) => pulse(loaded, &meta, s),
        Experiment::SqueezeSweep(s) => squeeze(loaded, &meta, s),
        Experiment::Reconstruct(s) => reconstruct(loaded, &meta, s),
    }
}

fn stabilize(l: &Loaded, meta: &Meta, s: &StabilizeSettings) -> Res<Vec<Output>> {
    let p = &l.params;
    let [dm, db] = l.scenario.dims;
    let alpha = s.alpha.value();
    let cat = cat_state::<f64>(dm, alpha, CatPhase::Plus)?;
    let (n, parity, fid) = (number_op::<f64>(dm)?, parity_op::<f64>(dm)?, projector(&cat)?);
    let every = ((s.record_every_ns / s.dt).round() as usize).max(1);
    let vac = fock_state::<f64>(dm, 0)?.to_density();
    let traj = match s.model {
        ModelKind::Reduced => {
            let model = build_reduced_model(p, alpha, ReducedOptions::default(), dm)?;
            let opts = EvolveOptions::new(s.dt)
                .observe("n", n)
                .observe("parity", parity)
                .observe("fidelity", fid)
                .record_every(every)
                .store_every(0);
            evolve(&model, &vac, (0.0, s.duration_ns), &opts)?
        }
        ModelKind::Bipartite => {
            let eps = p.stabilizing_drive(alpha);
            let drive: Coefficient<f64> = Arc::new(move |_| eps);
            let model = build_bipartite_model(p, drive, (dm, db), FluxSetting::On)?;
            let dims = [dm, db];
            let opts = EvolveOptions::new(s.dt)
                .observe("n", n.embed(0, &dims)?)
                .observe("parity", parity.embed(0, &dims)?)
                .observe("fidelity", fid.embed(0, &dims)?)
                .record_every(every)
                .store_every(0);
            let rho0 = vac.tensor(&fock_state::<f64>(db, 0)?.to_density());
            evolve(&model, &rho0, (0.0, s.duration_ns), &opts)?
        }
    };
    let memory = match s.model {
        ModelKind::Reduced => traj.final_state.clone(),
        ModelKind::Bipartite => traj.final_state.partial_trace(0)?,
    };
    let cols = ["n", "parity", "fidelity"].map(|k| traj.record_re(k).expect("observable recorded"));
    let mut body = String::from("t,n,parity,fidelity\n");
    for (k, t) in traj.times.iter().enumerate() {
        let _ = writeln!(body, "{t},{:.10e},{:.10e},{:.10e}", cols[0][k], cols[1][k], cols[2][k]);
    }
    let mut out = vec![meta.csv("traj.csv", &body)];
    if let Some(g) = &s.grid {
        let map = wigner_map(&memory, &g.build()?)?;
        out.push(meta.csv("wigner.csv", &map.to_csv_string()));
    }
    out.push(meta.json(
        "json",
        json!({
            "final_time_ns": traj.times.last(),
            "final_n": cols[0].last(),
            "final_parity": cols[1].last(),
            "final_fidelity": cols[2].last(),
            "max_trace_drift": traj.max_trace_drift,
        }),
    ));
    Ok(out)
}

fn tomography_run(l: &Loaded, meta: &Meta, s: &TomographySettings) -> Res<Vec<Output>> {
    let p = &l.params;
    let dm = l.scenario.dims[0];
    let alpha = s.alpha.value();
    let model = build_reduced_model(p, alpha, ReducedOptions::default(), dm)?;
    let vac = fock_state::<f64>(dm, 0)?.to_density();
    let opts = EvolveOptions::new(1.0).store_every(0).record_every(usize::MAX);
    let rho = evolve(&model, &vac, (0.0, s.prep_ns), &opts)?.final_state;
    let grid = s.grid.build()?;
    let mut out = Vec::new();
    let mut summary = serde_json::Map::new();
    for &proto in &s.protocols {
        let map = tomography(&rho, p, &grid, proto)?;
        let tag = protocol_name(proto);
        out.push(meta.csv(&format!("{tag}.wigner.csv"), &map.to_csv_string()));
        let (beta, w) = origin_value(&map);
        summary.insert(
            tag.into(),
            json!({
                "beta_nearest_origin": [beta.re, beta.im],
                "w_at_origin": w,
                "parity_at_origin": w * std::f64::consts::FRAC_PI_2,
                "map": to_value(&map),
            }),
        );
    }
    let cat = cat_state::<f64>(dm, alpha, CatPhase::Plus)?;
    out.push(meta.json(
        "json",
        json!({
            "prep_fidelity": rho.fidelity_pure(&cat),
            "protocols": summary,
        }),
    ));
    Ok(out)
}

fn gate_settings(l: &Loaded, model: catsim::gates::GateModel, dt: f64) -> GateSettings {
    GateSettings {
        dim_m: l.scenario.dims[0],
        dim_b: l.scenario.dims[1],
        model,
        dt,
        ..GateSettings::default()
    }
}

fn gate_x(l: &Loaded, meta: &Meta, s: &GateXSettings) -> Res<Vec<Output>> {
    let settings = gate_settings(l, s.model, s.dt);
    let alpha = s.alpha.value();
    let errs: Vec<f64> = s
        .thetas
        .par_iter()
        .map(|&theta| {
            let gate = XGate {
                alpha,
                theta,
                tau: s.tau_ns,
                sigma: s.sigma_ns,
            };
            x_gate_error(&l.params, &gate, &settings)
        })
        .collect::<catsim::Result<_>>()?;
    let mut body = String::from("theta,trace_distance\n");
    for (t, e) in s.thetas.iter().zip(&errs) {
        let _ = writeln!(body, "{t},{e:.10e}");
    }
    Ok(vec![
        meta.csv("sweep.csv", &body),
        meta.json("json", json!({ "thetas": s.thetas, "trace_distance": errs })),
    ])
}

fn gate_y(l: &Loaded, meta: &Meta, s: &GateYSettings) -> Res<Vec<Output>> {
    let dm = l.scenario.dims[0];
    let alpha = s.alpha.value();
    let eps = match s.epsilon_y {
        Some(e) => e,
        None => calibrate_zeno_y(&l.params, s.calibrate_ns.expect("validated"), dm)?,
    };
    let cat = cat_state::<f64>(dm, alpha, CatPhase::Plus)?.to_density();
    let rows: Vec<(f64, f64, Complex, f64, [f64; 3])> = s
        .t_rots_ns
        .par_iter()
        .map(|&t| -> Res<_> {
            let gate = ZenoY {
                deflate_ns: s.deflate_ns,
                ..ZenoY::new(alpha, eps, t)
            };
            let o = zeno_y(&cat, &l.params, &gate)?;
            let (c, sn) = ((eps * t).cos(), (eps * t).sin());
            let amps = DVector::from_fn(dm, |i, _| match i {
                0 => Complex::new(c, 0.0),
                1 => Complex::new(sn, 0.0),
                _ => Complex::new(0.0, 0.0),
            });
            let target = PureState::new(vec![dm], amps)?;
            Ok((
                o.deflated.population(0),
                o.deflated.population(1),
                o.deflated.matrix()[(0, 1)],
                o.deflated.fidelity_pure(&target),
                logical_bloch(&o.state, alpha)?,
            ))
        })
        .collect::<Res<_>>()?;
    let mut body = String::from("t_rot_ns,p0,p1,re_rho01,im_rho01,target_overlap,x,y,z\n");
    for (t, r) in s.t_rots_ns.iter().zip(&rows) {
        let _ = writeln!(
            body,
            "{t},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e}",
            r.0, r.1, r.2.re, r.2.im, r.3, r.4[0], r.4[1], r.4[2]
        );
    }
    let overlaps: Vec<f64> = rows.iter().map(|r| r.3).collect();
    Ok(vec![
        meta.csv("sweep.csv", &body),
        meta.json(
            "json",
            json!({ "epsilon_y": eps, "t_rots_ns": s.t_rots_ns, "target_overlap": overlaps }),
        ),
    ])
}

fn gate_z(l: &Loaded, meta: &Meta, s: &GateZSettings) -> Res<Vec<Output>> {
    let dm = l.scenario.dims[0];
    let alpha = s.alpha.value();
    let cat = cat_state::<f64>(dm, alpha, CatPhase::Plus)?.to_density();
    let rows: Vec<(f64, f64, [f64; 3])> = s
        .thetas
        .par_iter()
        .map(|&theta| -> Res<_> {
            let eps = calibrate_z(&l.params, alpha, theta, s.duration_ns, dm)?;
            let out = z_rotation(&cat, &l.params, alpha, eps, s.duration_ns)?;
            Ok((eps, z_phase(&out, alpha)?, logical_bloch(&out, alpha)?))
        })
        .collect::<Res<_>>()?;
    let mut body = String::from("theta,epsilon_z,phase,x,y,z\n");
    for (t, r) in s.thetas.iter().zip(&rows) {
        let _ = writeln!(
            body,
            "{t},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e}",
            r.0, r.1, r.2[0], r.2[1], r.2[2]
        );
    }
    let eps: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let phases: Vec<f64> = rows.iter().map(|r| r.1).collect();
    Ok(vec![
        meta.csv("sweep.csv", &body),
        meta.json("json", json!({ "thetas": s.thetas, "epsilon_z": eps, "phase": phases })),
    ])
}

fn pulse(l: &Loaded, meta: &Meta, s: &PulseSettings) -> Res<Vec<Output>> {
    let settings = gate_settings(l, s.model, s.dt);
    let land = optimize_pulse(&l.params, s.alpha.value(), s.theta, &s.taus_ns, &s.ratios, &settings)?;
    Ok(vec![
        meta.csv("landscape.csv", &land.to_csv_string()),
        meta.json("json", to_value(&land)),
    ])
}

fn squeeze(l: &Loaded, meta: &Meta, s: &SqueezeSettings) -> Res<Vec<Output>> {
    let alpha = s.alpha.value();
    let [dm, db] = l.scenario.dims;
    let sweep = squeeze_sweep(&l.params, alpha, &s.t_offs_ns, (dm, db), l.scenario.seed)?;
    let mut out = vec![meta.csv("squeeze.csv", &sweep.to_csv_string())];
    if let Some(span) = s.amplitude_span_ns {
        let p = &l.params;
        let trace = integrate_amplitudes(
            mhz_to_rad_per_ns(p.g2_over_2pi),
            mhz_to_rad_per_ns(p.kappa_b_over_2pi),
            alpha.norm(),
            (0.0, span),
            0.01,
        )?;
        out.push(meta.csv("traj.csv", &trace.to_csv_string()));
    }
    let peak = sweep.peak().map(|p| json!({ "t_off_ns": p.t_off, "fit": p.fit }));
    out.push(meta.json("json", json!({ "peak": peak, "sweep": to_value(&sweep) })));
    Ok(out)
}

fn random_bloch(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v = [0, 1, 2].map(|_| 2.0 * rng.random::<f64>() - 1.0);
        if v.iter().map(|x| x * x).sum::<f64>() <= 1.0 {
            return v;
        }
    }
}

fn reconstruct(l: &Loaded, meta: &Meta, s: &ReconstructSettings) -> Res<Vec<Output>> {
    let alpha = s.alpha.value();
    let basis = LogicalBasis::new(alpha, l.scenario.dims[0])?;
    let grid = s.grid.build()?;
    let mut rng = ChaCha8Rng::seed_from_u64(l.scenario.seed);
    let mut truths = s.bloch.clone();
    truths.extend((0..s.random).map(|_| random_bloch(&mut rng)));
    let rows: Vec<([f64; 3], f64)> = truths
        .par_iter()
        .map(|r| -> Res<_> {
            let truth = LogicalState::from_bloch(alpha, *r)?;
            let rho = basis.embed(&truth)?;
            let map = match s.protocol {
                None | Some(Protocol::Ideal) => wigner_map(&rho, &grid)?,
                Some(p) => tomography(&rho, &l.params, &grid, p)?,
            };
            let est = mle_logical(&map, alpha)?;
            let d = trace_distance(&logical_density(&truth)?, &logical_density(&est)?)?;
            Ok((bloch_vector(&est), d))
        })
        .collect::<Res<_>>()?;
    let mut body = String::from("index,x,y,z,x_est,y_est,z_est,trace_distance\n");
    for (k, (r, (e, d))) in truths.iter().zip(&rows).enumerate() {
        let _ = writeln!(
            body,
            "{k},{},{},{},{:.10e},{:.10e},{:.10e},{d:.10e}",
            r[0], r[1], r[2], e[0], e[1], e[2]
        );
    }
    let dists: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let worst = dists.iter().cloned().fold(0.0, f64::max);
    Ok(vec![
        meta.csv("reconstruct.csv", &body),
        meta.json(
            "json",
            json!({ "truth": truths, "estimate": rows.iter().map(|r| r.0).collect::<Vec<_>>(),
                    "trace_distance": dists, "max_trace_distance": worst }),
        ),
    ])
}

fn logical_density(s: &LogicalState) -> Res<DensityMatrix> {
    let m = &s.rho_logical;
    Ok(DensityMatrix::from_matrix(
        vec![2],
        DMatrix::from_fn(2, 2, |i, j| m[(i, j)]),
    )?)
}
