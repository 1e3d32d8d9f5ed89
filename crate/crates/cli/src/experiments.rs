//! The five experiment kinds. Each returns its artifacts in memory together
//! with the assertions it evaluated; nothing here touches the filesystem.

use serde::Serialize;
use serde_json::json;
use sfde_core::diagnostics::{
    contraction_check, coupled_sup_differences, energy_statistics, extinction_probe,
    par_map_ordered, path_for, rate_from_sup_differences,
};
use sfde_core::operators::{operator_certificate, subgradient_suite};
use sfde_core::scalar::{huber, verify_scalar_inequalities};
use sfde_core::svi::{
    make_test_process, selection_inequality_check, slack_ladder, svi_path_terms, SelectionReport,
    SlackLadderReport, SviPathTerms,
};
use sfde_core::{
    simulate_coupled, DeltaSmoothing, DirichletLaplacian, DriftSpec, Ensemble64, Nonlinearity64,
    Regularization64, Scheme, Solver64, SolverConfig64, SviReport, Trajectory64, WienerPath,
    YosidaRegularization,
};

use crate::config::{config, ExperimentConfig, Kind, LadderParam, TestSpec};
use crate::LabError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Assertion {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub kind: Kind,
    pub artifacts: Vec<Artifact>,
    pub assertions: Vec<Assertion>,
}

impl Outcome {
    fn new(kind: Kind) -> Self {
        Self {
            kind,
            artifacts: Vec::new(),
            assertions: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }

    pub fn artifact(&self, name: &str) -> Option<&Artifact> {
        self.artifacts.iter().find(|a| a.name == name)
    }

    fn json(&mut self, name: &str, value: &impl Serialize) -> Result<(), LabError> {
        let mut bytes =
            serde_json::to_vec_pretty(value).map_err(|e| LabError::Config(e.to_string()))?;
        bytes.push(b'\n');
        self.artifacts.push(Artifact {
            name: name.into(),
            bytes,
        });
        Ok(())
    }

    fn csv(
        &mut self,
        name: &str,
        write: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
    ) -> Result<(), LabError> {
        let mut bytes = Vec::new();
        write(&mut bytes).map_err(|e| LabError::Io {
            path: name.into(),
            message: e.to_string(),
        })?;
        self.artifacts.push(Artifact {
            name: name.into(),
            bytes,
        });
        Ok(())
    }

    fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.assertions.push(Assertion::new(name, passed, detail));
    }

    fn finish(mut self, cfg: &ExperimentConfig) -> Result<Self, LabError> {
        let summary = json!({
            "kind": self.kind,
            "passed": self.passed(),
            "seed": cfg.seed,
            "paths": cfg.paths,
            "assertions": self.assertions,
        });
        self.json("summary.json", &summary)?;
        Ok(self)
    }
}

/// Runs one experiment; `cfg.kind`, when present, must equal `kind`.
pub fn run(kind: Kind, cfg: &ExperimentConfig) -> Result<Outcome, LabError> {
    if let Some(k) = cfg.kind {
        if k != kind {
            return Err(LabError::Config(format!(
                "config is for `{k}`, not `{kind}`"
            )));
        }
    }
    match kind {
        Kind::ScalarVerify => scalar_verify(cfg),
        Kind::Simulate => simulate(cfg),
        Kind::Converge => converge(cfg),
        Kind::Contraction => contraction(cfg),
        Kind::SviCheck => svi_check(cfg),
    }
}

fn scalar_verify(cfg: &ExperimentConfig) -> Result<Outcome, LabError> {
    let spec = cfg.scalar_spec();
    let r = spec.r_grid()?;
    let pairs = spec.pair_grid()?;
    let mut out = Outcome::new(Kind::ScalarVerify);

    let mut reports = Vec::new();
    for &m in &spec.m {
        let nl = Nonlinearity64::new(m).map_err(config)?;
        for &e in &spec.eps {
            let y = YosidaRegularization::new(e).map_err(config)?;
            reports.push(verify_scalar_inequalities(
                &nl,
                Some(y),
                None,
                &r,
                Some(&pairs),
            )?);
        }
        for &d in &spec.delta {
            let s = DeltaSmoothing::new(d).map_err(config)?;
            reports.push(verify_scalar_inequalities(&nl, None, Some(s), &r, None)?);
        }
    }
    let violations: usize = reports.iter().map(|rep| rep.violations()).sum();
    let mut failing: Vec<&str> = reports
        .iter()
        .flat_map(|rep| {
            rep.checks
                .iter()
                .filter(|c| !c.passed)
                .map(|c| c.name.as_str())
        })
        .collect();
    failing.sort_unstable();
    failing.dedup();
    let mut detail = format!("{} certificates, {violations} violations", reports.len());
    if !failing.is_empty() {
        detail.push_str(&format!(" in [{}]", failing.join(", ")));
    }
    out.check(
        "scalar inequalities",
        reports.iter().all(|rep| rep.passed),
        detail,
    );

    let sign = Nonlinearity64::new(0.0).map_err(config)?;
    let mut huber_rows = Vec::new();
    for &e in &spec.eps {
        let y = YosidaRegularization::new(e).map_err(config)?;
        let err = r
            .iter()
            .map(|&x| (y.psi(&sign, x) - huber(e, x)).abs())
            .fold(0.0, f64::max);
        huber_rows.push(json!({ "eps": e, "max_abs_error": err }));
    }
    let worst = huber_rows
        .iter()
        .filter_map(|v| v["max_abs_error"].as_f64())
        .fold(0.0, f64::max);
    out.check(
        "huber equivalence",
        worst <= spec.huber_tol,
        format!(
            "max |psi_eps - huber| = {worst:e} (tol {:e})",
            spec.huber_tol
        ),
    );

    let mut operators = Vec::new();
    if let Some(op) = &spec.operators {
        for &n in &op.sizes {
            let lap = DirichletLaplacian::new(sfde_core::Domain::unit(n).map_err(config)?);
            operators.push(operator_certificate(
                &lap,
                &op.m,
                &op.lambdas,
                op.samples,
                cfg.seed,
            )?);
        }
        let v: usize = operators.iter().map(|rep| rep.violations()).sum();
        out.check(
            "operator identities",
            operators.iter().all(|rep| rep.passed),
            format!("{v} violations"),
        );
    }

    let mut subgradient = Vec::new();
    if let Some(sg) = &spec.subgradient {
        let lap = DirichletLaplacian::new(sfde_core::Domain::unit(sg.n).map_err(config)?);
        for &m in &sg.m {
            let nl = Nonlinearity64::new(m).map_err(config)?;
            subgradient.push(subgradient_suite(&lap, &nl, sg.trials, cfg.seed)?);
        }
        let v: usize = subgradient.iter().map(|rep| rep.violations()).sum();
        out.check(
            "subgradient inequality",
            subgradient.iter().all(|rep| rep.passed),
            format!("{v} violations"),
        );
    }

    out.json(
        "certificate.json",
        &json!({
            "scalar": reports,
            "huber": huber_rows,
            "operators": operators,
            "subgradient": subgradient,
        }),
    )?;
    out.finish(cfg)
}

fn simulate(cfg: &ExperimentConfig) -> Result<Outcome, LabError> {
    cfg.require_paths()?;
    let scfg = cfg.solver_config()?;
    let x0 = cfg.initial_datum()?;
    let spec = cfg.simulate_spec();
    let seeds = cfg.seeds();
    let lap = DirichletLaplacian::new(scfg.domain);
    let mut out = Outcome::new(Kind::Simulate);

    let ens = Ensemble64::simulate(&scfg, &x0, &seeds, cfg.threads)?;
    for (i, tr) in ens.trajectories.iter().take(spec.csv_paths).enumerate() {
        out.csv(&format!("trajectory_{i}.csv"), |w| tr.write_csv(w))?;
    }

    let energy = energy_statistics(&ens, &scfg.nl, scfg.eps_visc, &scfg.regularization)?;
    let solver = Solver64::new(scfg.clone())?;
    let times = ens.times().to_vec();
    let mut rows = Vec::with_capacity(times.len());
    for (k, &t_k) in times.iter().enumerate() {
        let l2: Vec<f64> = ens
            .trajectories
            .iter()
            .map(|t| t.states[k].l2_norm_sq())
            .collect();
        let hm: Vec<f64> = ens
            .trajectories
            .iter()
            .map(|t| lap.h_minus1_norm_sq(&t.states[k]))
            .collect::<sfde_core::Result<_>>()?;
        let ly: Vec<f64> = ens
            .trajectories
            .iter()
            .map(|t| solver.lyapunov(&t.states[k]))
            .collect();
        rows.push((t_k, mean(&l2), mean(&hm), mean(&ly)));
    }
    out.csv("norms.csv", |w| {
        use std::io::Write;
        writeln!(w, "t,mean_l2_sq,mean_h_minus1_sq,mean_lyapunov")?;
        for (t, a, b, c) in &rows {
            writeln!(w, "{t},{a},{b},{c}")?;
        }
        Ok(())
    })?;
    let sup_l2 = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    out.json(
        "energy.json",
        &json!({
            "energy": energy,
            "sup_mean_l2_sq": sup_l2,
            "initial_l2_sq_plus_one": x0.l2_norm_sq() + 1.0,
        }),
    )?;

    if let Some(th) = spec.extinction_threshold {
        let times = extinction_probe(&lap, &ens, th)?;
        out.json(
            "extinction.json",
            &json!({ "threshold": th, "seeds": seeds, "times": times }),
        )?;
    }

    if spec.check_dissipation {
        if !scfg.noise.is_deterministic()
            || scfg.scheme != Scheme::Implicit
            || scfg.record_every != 1
        {
            return Err(LabError::Config(
                "check_dissipation needs a noise-free implicit run recorded at every step".into(),
            ));
        }
        let tol = scfg.newton_tol;
        let (mut worst_h, mut worst_e) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for tr in &ens.trajectories {
            let h: Vec<f64> = tr
                .states
                .iter()
                .map(|s| lap.h_minus1_norm(s))
                .collect::<sfde_core::Result<_>>()?;
            let e: Vec<f64> = tr.states.iter().map(|s| solver.lyapunov(s)).collect();
            worst_h = h.windows(2).map(|w| w[1] - w[0]).fold(worst_h, f64::max);
            worst_e = e.windows(2).map(|w| w[1] - w[0]).fold(worst_e, f64::max);
        }
        out.check(
            "H^-1 norm nonincreasing",
            worst_h <= tol,
            format!("largest one-step increase {worst_h:e} (tol {tol:e})"),
        );
        out.check(
            "Lyapunov energy nonincreasing",
            worst_e <= tol,
            format!("largest one-step increase {worst_e:e} (tol {tol:e})"),
        );
        out.json(
            "dissipation.json",
            &json!({ "max_h_minus1_increase": worst_h, "max_lyapunov_increase": worst_e, "tol": tol }),
        )?;
    }

    if let Some(oracle) = &spec.eigen_oracle {
        let linear = scfg.nl.m() == 1.0
            && scfg.regularization == Regularization64::None
            && scfg.eps_visc == 0.0
            && scfg.noise.is_deterministic();
        if !linear || oracle.mode == 0 || oracle.mode > scfg.domain.n() {
            return Err(LabError::Config(
                "eigen_oracle needs m = 1, no regularization, no viscosity, no noise, and a valid mode".into(),
            ));
        }
        let lam = lap.eigenvalues()[oracle.mode - 1];
        let factor = match scfg.scheme {
            Scheme::Implicit => 1.0 / (1.0 + scfg.dt * lam),
            Scheme::Imex => 1.0 - scfg.dt * lam,
        };
        let scale = x0.sup_norm().max(f64::MIN_POSITIVE);
        let mut worst = 0.0f64;
        for tr in &ens.trajectories {
            for (t, s) in tr.times.iter().zip(&tr.states) {
                let steps = (t / scfg.dt).round() as i32;
                let expected = x0.scale(factor.powi(steps));
                worst = worst.max(s.sub(&expected)?.sup_norm() / scale);
            }
        }
        out.check(
            "eigenmode decay",
            worst <= oracle.tol,
            format!(
                "relative deviation {worst:e} from factor^n (tol {:e})",
                oracle.tol
            ),
        );
        out.json("oracle.json", &json!({ "mode": oracle.mode, "lambda": lam, "factor": factor, "max_rel_error": worst }))?;
    }

    if let Some(f) = spec.scheme_agreement {
        let mut other = scfg.clone();
        other.scheme = match scfg.scheme {
            Scheme::Imex => Scheme::Implicit,
            Scheme::Implicit => Scheme::Imex,
        };
        let path = path_for(&scfg, seeds[0])?;
        let alt = Solver64::new(other)?.simulate(&x0, &path)?;
        let base = &ens.trajectories[0];
        let mut sup = 0.0f64;
        for (a, b) in base.states.iter().zip(&alt.states) {
            sup = sup.max(a.sub(b)?.sup_norm());
        }
        let bound = f * scfg.dt * x0.sup_norm();
        out.check(
            "IMEX and implicit agree",
            sup <= bound,
            format!("sup difference {sup:e} (bound {bound:e})"),
        );
        out.json(
            "schemes.json",
            &json!({ "sup_difference": sup, "bound": bound }),
        )?;
    }
    out.finish(cfg)
}

fn mean(v: &[f64]) -> f64 {
    sfde_core::real::mean(v)
}

/// Ladder configurations, the fine path step and the per-level record strides.
pub fn ladder_configs(cfg: &ExperimentConfig) -> Result<(Vec<SolverConfig64>, f64), LabError> {
    let base = cfg.solver_config()?;
    let spec = cfg.ladder_spec()?;
    if spec.values.len() < 3 {
        return Err(LabError::Config("a ladder needs at least 3 values".into()));
    }
    let mut cfgs = Vec::with_capacity(spec.values.len());
    for &v in &spec.values {
        let mut c = base.clone();
        match spec.parameter {
            LadderParam::Delta => c.regularization = Regularization64::delta(v).map_err(config)?,
            LadderParam::Yosida => {
                c.regularization = Regularization64::yosida(v).map_err(config)?
            }
            LadderParam::EpsVisc => c.eps_visc = v,
            LadderParam::Dt => c.dt = v,
        }
        c.validate().map_err(config)?;
        cfgs.push(c);
    }
    let fine = cfgs.iter().map(|c| c.dt).fold(f64::INFINITY, f64::min);
    let coarse = cfgs.iter().map(|c| c.dt).fold(0.0, f64::max);
    for c in &mut cfgs {
        let ratio = (coarse / c.dt).round();
        let fine_ratio = (c.dt / fine).round();
        if (ratio * c.dt - coarse).abs() > 1e-9 * coarse
            || (fine_ratio * fine - c.dt).abs() > 1e-9 * c.dt
        {
            return Err(LabError::Config(
                "ladder time steps must be nested multiples of each other".into(),
            ));
        }
        c.record_every = base.record_every * ratio as usize;
    }
    Ok((cfgs, fine))
}

fn converge(cfg: &ExperimentConfig) -> Result<Outcome, LabError> {
    cfg.require_paths()?;
    let (cfgs, fine) = ladder_configs(cfg)?;
    let spec = cfg.ladder_spec()?;
    let x0 = cfg.initial_datum()?;
    let lap = DirichletLaplacian::new(cfgs[0].domain);
    let steps = (cfgs[0].t_end / fine).round() as usize;
    let modes = cfgs[0].noise.modes();
    let seeds = cfg.seeds();
    let mut out = Outcome::new(Kind::Converge);

    let sup = par_map_ordered(cfg.threads, &seeds, |&seed| {
        let path = WienerPath::sample(seed, fine, steps, modes)?;
        let ladder = simulate_coupled(&cfgs, &x0, &path)?;
        coupled_sup_differences(&lap, &ladder)
    })?;
    let fit = rate_from_sup_differences(&spec.values, &sup);
    out.csv("per_path.csv", |w| {
        use std::io::Write;
        writeln!(w, "seed,parameter,sup_h_minus1_sq")?;
        for (seed, row) in seeds.iter().zip(&sup) {
            for (p, v) in spec.values.iter().zip(row) {
                writeln!(w, "{seed},{p},{v}")?;
            }
        }
        Ok(())
    })?;
    match fit {
        Ok(fit) => {
            out.csv("levels.csv", |w| {
                use std::io::Write;
                writeln!(w, "parameter,error")?;
                for (p, e) in &fit.levels {
                    writeln!(w, "{p},{e}")?;
                }
                Ok(())
            })?;
            out.check(
                "rate slope",
                fit.slope >= spec.slope_min && fit.slope <= spec.slope_max,
                format!(
                    "slope {:.4} in [{}, {}]",
                    fit.slope, spec.slope_min, spec.slope_max
                ),
            );
            out.check(
                "rate fit quality",
                fit.r2 >= spec.r2_min,
                format!("r2 {:.4} >= {}", fit.r2, spec.r2_min),
            );
            out.json(
                "rate.json",
                &json!({ "parameter": spec.parameter, "values": spec.values, "fit": fit }),
            )?;
        }
        Err(e @ sfde_core::Error::Degenerate(_)) => {
            out.check("rate slope", false, e.to_string());
            out.json("rate.json", &json!({ "parameter": spec.parameter, "values": spec.values, "fit": null, "error": e.to_string() }))?;
        }
        Err(e) => return Err(e.into()),
    }
    out.finish(cfg)
}

fn contraction(cfg: &ExperimentConfig) -> Result<Outcome, LabError> {
    cfg.require_paths()?;
    let scfg = cfg.solver_config()?;
    let spec = cfg.contraction_spec()?;
    if spec.amplitudes.is_empty() {
        return Err(LabError::Config(
            "contraction needs at least one amplitude".into(),
        ));
    }
    let x0 = cfg.initial_datum()?;
    let pert = spec.perturbation.build(scfg.domain)?;
    let seeds = cfg.seeds();
    let lap = DirichletLaplacian::new(scfg.domain);
    let mut out = Outcome::new(Kind::Contraction);

    let ex = Ensemble64::simulate(&scfg, &x0, &seeds, cfg.threads)?;
    let mut reports = Vec::new();
    for &a in &spec.amplitudes {
        let y0 = x0.add(&pert.scale(a))?;
        let ey = Ensemble64::simulate(&scfg, &y0, &seeds, cfg.threads)?;
        let probe = contraction_check(&lap, &ex, &ey, 0.0, spec.tol)?;
        let k = match (spec.k, probe.minimal_k) {
            (Some(k), _) => k,
            (None, Some(k)) => k,
            (None, None) => f64::INFINITY,
        };
        let rep = if k.is_finite() {
            contraction_check(&lap, &ex, &ey, k, spec.tol)?
        } else {
            probe
        };
        reports.push((a, rep));
    }
    let base_ratio = reports[0].1.sup_ratio;
    let normalized: Vec<f64> = reports
        .iter()
        .map(|(_, r)| r.sup_ratio / base_ratio)
        .collect();
    let in_band = normalized
        .iter()
        .all(|&v| v >= spec.band[0] && v <= spec.band[1]);
    out.check(
        "quadratic scaling in the initial distance",
        in_band && base_ratio.is_finite() && base_ratio > 0.0,
        format!("normalized ratios {normalized:?} within {:?}", spec.band),
    );
    for (a, r) in &reports {
        out.check(
            format!("weighted contraction bound (amplitude {a})"),
            r.k.is_finite() && r.margin >= 0.0,
            format!("K = {}, margin {:e}", r.k, r.margin),
        );
    }
    out.csv("contraction.csv", |w| {
        use std::io::Write;
        writeln!(w, "amplitude,t,mean_sq_distance,half_width")?;
        for (a, r) in &reports {
            for ((t, d), hw) in r.times.iter().zip(&r.mean_sq_distance).zip(&r.half_width) {
                writeln!(w, "{a},{t},{d},{hw}")?;
            }
        }
        Ok(())
    })?;
    let rows: Vec<_> = reports
        .iter()
        .zip(&normalized)
        .map(|((a, r), n)| json!({ "amplitude": a, "normalized_ratio": n, "report": r }))
        .collect();
    out.json(
        "contraction.json",
        &json!({ "seeds": seeds, "levels": rows }),
    )?;
    out.finish(cfg)
}

struct PathSvi {
    terms: Vec<SviPathTerms<f64>>,
    frozen: Option<Vec<(SelectionReport, SlackLadderReport)>>,
}

fn drift_specs(
    cfg: &ExperimentConfig,
    scfg: &SolverConfig64,
) -> Result<Vec<(String, DriftSpec<f64>)>, LabError> {
    let spec = cfg.svi_spec()?;
    if spec.test_processes.is_empty() {
        return Err(LabError::Config(
            "svi needs at least one test process".into(),
        ));
    }
    spec.test_processes
        .iter()
        .map(|t| {
            let d = match t {
                TestSpec::Zero => DriftSpec::Zero,
                TestSpec::Constant(p) => DriftSpec::Constant(p.build(scfg.domain)?),
                TestSpec::RegularizedDrift {
                    regularization,
                    eps_visc,
                } => {
                    let mut c = scfg.clone();
                    c.regularization = regularization.build()?;
                    c.eps_visc = *eps_visc;
                    c.validate().map_err(config)?;
                    DriftSpec::RegularizedDrift(c)
                }
            };
            Ok((t.label(), d))
        })
        .collect()
}

/// Solver configuration of the SVI run: recorded at every step.
pub fn svi_solver_config(cfg: &ExperimentConfig) -> Result<SolverConfig64, LabError> {
    let mut scfg = cfg.solver_config()?;
    scfg.record_every = 1;
    Ok(scfg)
}

fn svi_check(cfg: &ExperimentConfig) -> Result<Outcome, LabError> {
    cfg.require_paths()?;
    let scfg = svi_solver_config(cfg)?;
    let spec = cfg.svi_spec()?;
    let x0 = cfg.initial_datum()?;
    let z0 = match &spec.z0 {
        Some(p) => p.build(scfg.domain)?,
        None => x0.clone(),
    };
    let c = spec.c.unwrap_or(scfg.noise.lipschitz_constant());
    let specs = drift_specs(cfg, &scfg)?;
    let lap = DirichletLaplacian::new(scfg.domain);
    let seeds = cfg.seeds();
    let first = seeds[0];
    let mut out = Outcome::new(Kind::SviCheck);

    let per_path = par_map_ordered(cfg.threads, &seeds, |&seed| {
        let path = path_for(&scfg, seed)?;
        let x: Trajectory64 = Solver64::new(scfg.clone())?.simulate(&x0, &path)?;
        let mut terms = Vec::with_capacity(specs.len());
        let mut frozen = (seed == first).then(Vec::new);
        for (_, d) in &specs {
            let z = make_test_process(d, &z0, &path, &scfg)?;
            terms.push(svi_path_terms(&lap, &scfg.nl, &x, &z)?);
            if let Some(f) = frozen.as_mut() {
                let sel = selection_inequality_check(
                    &lap,
                    &scfg.nl,
                    scfg.eps_visc,
                    &scfg.regularization,
                    &x,
                    &z.trajectory,
                )?;
                let ladder = slack_ladder(&lap, &scfg.nl, &x, &z.trajectory, &spec.slack_ladder)?;
                f.push((sel, ladder));
            }
        }
        Ok(PathSvi { terms, frozen })
    })?;

    let frozen = per_path[0].frozen.clone().unwrap_or_default();
    let mut rows = Vec::new();
    for (j, (label, _)) in specs.iter().enumerate() {
        let terms: Vec<SviPathTerms<f64>> = per_path.iter().map(|p| p.terms[j].clone()).collect();
        let rep = SviReport::from_terms(&terms, c)?;
        let (sel, ladder) = &frozen[j];
        out.check(
            format!("svi margins ({label})"),
            rep.passed,
            format!("min (margin + tolerance) = {:e}", rep.worst_slack),
        );
        out.check(
            format!("selection inequality ({label})"),
            sel.passed,
            format!(
                "{} violations, worst excess {:e}",
                sel.violations, sel.worst_excess
            ),
        );
        out.check(
            format!("slack slope ({label})"),
            ladder.all_passed && ladder.fit.slope >= spec.slack_slope_min,
            format!("slope {:.4} >= {}", ladder.fit.slope, spec.slack_slope_min),
        );
        out.csv(&format!("svi_{label}.csv"), |w| rep.write_csv(w))?;
        rows.push(json!({
            "test_process": label,
            "report": rep,
            "selection": {
                "violations": sel.violations,
                "worst_excess": sel.worst_excess,
                "sup_slack": sel.sup_slack(),
                "sup_certified_slack": sel.certified_slack.iter().copied().fold(0.0, f64::max),
            },
            "slack_ladder": ladder,
        }));
    }
    out.json(
        "svi.json",
        &json!({ "c": c, "seeds": seeds, "frozen_seed": first, "test_processes": rows }),
    )?;
    out.finish(cfg)
}

/// Human-readable plan; runs nothing.
pub fn describe(kind: Kind, cfg: &ExperimentConfig) -> Result<String, LabError> {
    use std::fmt::Write;
    if let Some(k) = cfg.kind {
        if k != kind {
            return Err(LabError::Config(format!(
                "config is for `{k}`, not `{kind}`"
            )));
        }
    }
    let mut s = String::new();
    let w = &mut s;
    let _ = writeln!(w, "experiment: {kind}");
    if kind == Kind::ScalarVerify {
        let spec = cfg.scalar_spec();
        let r = spec.r_grid()?;
        let _ = writeln!(w, "exponents m: {:?}", spec.m);
        let _ = writeln!(w, "Moreau-Yosida eps: {:?}", spec.eps);
        let _ = writeln!(w, "delta: {:?}", spec.delta);
        let _ = writeln!(
            w,
            "r grid: {} points on [{}, {}]; pair grid: {} points",
            r.len(),
            spec.r_min,
            spec.r_max,
            spec.pair_points
        );
        if let Some(op) = &spec.operators {
            let _ = writeln!(
                w,
                "operator suite: n in {:?}, {} samples, lambdas {:?}",
                op.sizes, op.samples, op.lambdas
            );
        }
        if let Some(sg) = &spec.subgradient {
            let _ = writeln!(
                w,
                "subgradient suite: m in {:?}, n = {}, {} trials",
                sg.m, sg.n, sg.trials
            );
        }
        let _ = writeln!(
            w,
            "certificates: {}",
            spec.m.len() * (spec.eps.len() + spec.delta.len())
        );
        return Ok(s);
    }
    cfg.require_paths()?;
    let scfg = if kind == Kind::SviCheck {
        svi_solver_config(cfg)?
    } else {
        cfg.solver_config()?
    };
    cfg.initial_datum()?;
    let d = scfg.domain;
    let _ = writeln!(
        w,
        "grid: ({}, {}), n = {}, h = {:e}",
        d.a(),
        d.b(),
        d.n(),
        d.h()
    );
    let _ = writeln!(
        w,
        "solver: m = {}, regularization {}, eps_visc = {}, scheme {:?}, dt = {:e}, T = {}, record every {}",
        scfg.nl.m(),
        match scfg.regularization {
            Regularization64::Yosida(y) => format!("yosida {}", y.eps()),
            Regularization64::Delta(d) => format!("delta {}", d.delta()),
            Regularization64::None => "none".into(),
        },
        scfg.eps_visc,
        scfg.scheme,
        scfg.dt,
        scfg.t_end,
        scfg.record_every
    );
    let _ = writeln!(
        w,
        "noise: {} modes, Lipschitz constant {}",
        scfg.noise.modes(),
        scfg.noise.lipschitz_constant()
    );
    let seeds = cfg.seeds();
    let _ = writeln!(
        w,
        "paths: {} (seeds {}..={}), threads: {}",
        cfg.paths,
        seeds[0],
        seeds[seeds.len() - 1],
        if cfg.threads == 0 {
            "all".to_string()
        } else {
            cfg.threads.to_string()
        }
    );
    let steps = scfg.n_steps();
    let (levels, runs_per_path) = match kind {
        Kind::Simulate => {
            let spec = cfg.simulate_spec();
            (1, 1 + usize::from(spec.scheme_agreement.is_some()))
        }
        Kind::Converge => {
            let (cfgs, fine) = ladder_configs(cfg)?;
            let spec = cfg.ladder_spec()?;
            let _ = writeln!(w, "ladder over {:?}:", spec.parameter);
            for (i, c) in cfgs.iter().enumerate() {
                let _ = writeln!(
                    w,
                    "  level {i}: value {} ({} steps)",
                    spec.values[i],
                    c.n_steps()
                );
            }
            let _ = writeln!(
                w,
                "coupling: every level of path i consumes the same Brownian path (step {fine:e}), coarsened to its own dt"
            );
            let _ = writeln!(
                w,
                "accept: slope in [{}, {}], r2 >= {}",
                spec.slope_min, spec.slope_max, spec.r2_min
            );
            (cfgs.len(), cfgs.len())
        }
        Kind::Contraction => {
            let spec = cfg.contraction_spec()?;
            let _ = writeln!(
                w,
                "perturbation amplitudes: {:?}; band {:?}",
                spec.amplitudes, spec.band
            );
            let _ = writeln!(
                w,
                "coupling: every initial datum is driven by the same set of paths"
            );
            (spec.amplitudes.len() + 1, spec.amplitudes.len() + 1)
        }
        Kind::SviCheck => {
            let specs = drift_specs(cfg, &scfg)?;
            let spec = cfg.svi_spec()?;
            let labels: Vec<_> = specs.iter().map(|s| s.0.as_str()).collect();
            let _ = writeln!(w, "test processes: {labels:?}, coupled to X path by path");
            let _ = writeln!(
                w,
                "slack ladder (frozen first path): {:?}",
                spec.slack_ladder
            );
            (specs.len() + 1, specs.len() + 1)
        }
        Kind::ScalarVerify => unreachable!(),
    };
    let _ = writeln!(w, "levels: {levels}");
    let _ = writeln!(
        w,
        "estimated cost: {} steps x {} paths x {} runs = {} steps",
        steps,
        cfg.paths,
        runs_per_path,
        steps * cfg.paths * runs_per_path
    );
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simulate_zero_noise_zero_datum_gives_zero_csv() {
        let cfg = ExperimentConfig::from_json(
            r#"{"grid": {"n": 7}, "initial": "zero",
                "solver": {"m": 0.0, "regularization": {"delta": 0.1}, "dt": 0.01, "t_end": 0.05}}"#,
        )
        .unwrap();
        let out = run(Kind::Simulate, &cfg).unwrap();
        assert!(out.passed());
        let csv =
            String::from_utf8(out.artifact("trajectory_0.csv").unwrap().bytes.clone()).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("t,node,x,value"));
        assert!(lines.all(|l| l.ends_with(",0")), "{csv}");
    }

    #[test]
    fn kind_mismatch_is_a_config_error() {
        let cfg = ExperimentConfig::from_json(r#"{"kind": "converge"}"#).unwrap();
        assert!(matches!(
            run(Kind::Simulate, &cfg),
            Err(LabError::Config(_))
        ));
    }

    #[test]
    fn describe_lists_ladder_levels() {
        let cfg = ExperimentConfig::from_json(
            r#"{"paths": 4, "grid": {"n": 15}, "initial": {"sine": {"mode": 1}},
                "solver": {"m": 0.0, "regularization": {"delta": 0.1}, "dt": 0.001, "t_end": 0.01},
                "ladder": {"parameter": "dt", "values": [0.002, 0.001, 0.0005]}}"#,
        )
        .unwrap();
        let text = describe(Kind::Converge, &cfg).unwrap();
        assert!(text.contains("level 2: value 0.0005"), "{text}");
        assert!(text.contains("same Brownian path"));
    }

    #[test]
    fn dt_ladder_records_on_common_times() {
        let cfg = ExperimentConfig::from_json(
            r#"{"paths": 2, "grid": {"n": 15}, "initial": {"sine": {"mode": 1}},
                "noise": {"modes": [{"profile": {"constant": 0.5}}]},
                "solver": {"m": 0.5, "regularization": {"delta": 0.1}, "dt": 0.001, "t_end": 0.02},
                "ladder": {"parameter": "dt", "values": [0.004, 0.002, 0.001, 0.0005],
                           "slope_min": 0.0, "slope_max": 10.0, "r2_min": 0.0}}"#,
        )
        .unwrap();
        let out = run(Kind::Converge, &cfg).unwrap();
        assert!(out.artifact("rate.json").is_some());
    }

    #[test]
    fn outputs_are_deterministic_across_thread_counts() {
        let text = |threads: usize| {
            format!(
                r#"{{"paths": 6, "threads": {threads}, "grid": {{"n": 15}}, "initial": {{"sine": {{"mode": 1}}}},
                    "noise": {{"modes": [{{"profile": {{"constant": 1.0}}}}]}},
                    "solver": {{"m": 0.0, "regularization": {{"delta": 0.1}}, "dt": 0.001, "t_end": 0.01}}}}"#
            )
        };
        let a = run(
            Kind::Simulate,
            &ExperimentConfig::from_json(&text(1)).unwrap(),
        )
        .unwrap();
        let b = run(
            Kind::Simulate,
            &ExperimentConfig::from_json(&text(3)).unwrap(),
        )
        .unwrap();
        assert_eq!(a.artifacts, b.artifacts);
    }
}
