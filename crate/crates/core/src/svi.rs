//! Test processes and numerical evaluation of the stochastic variational
//! inequality
//!
//! ```text
//! E||X_t - Z_t||^2 + 2 E int phi(X) <= E||x0 - Z_0||^2 + 2 E int phi(Z)
//!                                      - 2 E int (G, X - Z) + C E int ||X - Z||^2
//! ```
//!
//! with all norms and pairings in `H^{-1}` and `phi` the unregularized energy.
//! A finite family of test processes only yields necessary conditions.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::diagnostics::RateFit;
use crate::error::{Error, Result};
use crate::grid::{DirichletLaplacian, GridFunction};
use crate::noise::WienerPath;
use crate::real::{mean, sample_std, Real};
use crate::scalar::{PowerNonlinearity, Regularization};
use crate::solver::{path_factor, Solver, SolverConfig, Trajectory};

/// User drift `G(t, z)`.
pub type DriftFn<T> = Arc<dyn Fn(T, &GridFunction<T>) -> Result<GridFunction<T>> + Send + Sync>;

/// Drift `G` of a test process `dZ = G dt + B(Z) dW`.
#[derive(Clone)]
pub enum DriftSpec<T: Real> {
    Zero,
    Constant(GridFunction<T>),
    /// `G = eps Delta Z + Delta phi_reg(Z)`, integrated by the solver.
    RegularizedDrift(SolverConfig<T>),
    /// Explicit user drift, integrated by Euler-Maruyama.
    Custom(DriftFn<T>),
}

impl<T: Real> fmt::Debug for DriftSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Zero => f.write_str("Zero"),
            Self::Constant(c) => f.debug_tuple("Constant").field(c).finish(),
            Self::RegularizedDrift(cfg) => f.debug_tuple("RegularizedDrift").field(cfg).finish(),
            Self::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// A simulated test process, recorded at every step.
#[derive(Debug, Clone)]
pub struct TestProcess<T: Real> {
    pub z0: GridFunction<T>,
    pub spec: DriftSpec<T>,
    pub trajectory: Trajectory<T>,
    /// `drift[n]` is the `G` used on step `n -> n+1`:
    /// `Z_{n+1} - Z_n = dt drift[n] + B(t_n, Z_n) dW_n`.
    pub drift: Vec<GridFunction<T>>,
}

/// Simulates `Z` on `path` with the time grid and noise of `base`.
pub fn make_test_process<T: Real>(
    spec: &DriftSpec<T>,
    z0: &GridFunction<T>,
    path: &WienerPath,
    base: &SolverConfig<T>,
) -> Result<TestProcess<T>> {
    base.validate()?;
    if *z0.domain() != base.domain {
        return Err(Error::DomainMismatch);
    }
    if let DriftSpec::RegularizedDrift(cfg) = spec {
        if cfg.domain != base.domain || cfg.dt != base.dt || cfg.t_end != base.t_end {
            return Err(Error::Incompatible(
                "test-process configuration differs in grid or time step".into(),
            ));
        }
        if cfg.noise.modes() != base.noise.modes()
            || cfg.noise.lipschitz_constant() != base.noise.lipschitz_constant()
        {
            return Err(Error::Incompatible(
                "test-process configuration differs in noise".into(),
            ));
        }
        let mut cfg = cfg.clone();
        cfg.record_every = 1;
        let trajectory = Solver::new(cfg)?.simulate(z0, path)?;
        let drift = trajectory.eta[1..].to_vec();
        return Ok(TestProcess {
            z0: z0.clone(),
            spec: spec.clone(),
            trajectory,
            drift,
        });
    }
    let factor = path_factor(base, path)?;
    let steps = base.n_steps();
    let dt = base.dt;
    let eval = |t: T, z: &GridFunction<T>| -> Result<GridFunction<T>> {
        match spec {
            DriftSpec::Zero => Ok(GridFunction::zeros(base.domain)),
            DriftSpec::Constant(c) => {
                if *c.domain() != base.domain {
                    return Err(Error::DomainMismatch);
                }
                Ok(c.clone())
            }
            DriftSpec::Custom(f) => {
                let g = f(t, z)?;
                if *g.domain() != base.domain {
                    return Err(Error::DomainMismatch);
                }
                Ok(g)
            }
            DriftSpec::RegularizedDrift(_) => unreachable!(),
        }
    };
    let mut z = z0.clone();
    let mut g = eval(T::zero(), &z)?;
    let mut trajectory = Trajectory {
        times: vec![T::zero()],
        states: vec![z.clone()],
        eta: vec![g.clone()],
        path_seed: path.seed(),
        dt,
    };
    let mut drift = Vec::with_capacity(steps);
    let mut dw = vec![T::zero(); path.modes()];
    for n in 0..steps {
        let t = T::from_usize(n).unwrap() * dt;
        for (k, d) in dw.iter_mut().enumerate() {
            *d = T::lit(path.value(k, (n + 1) * factor) - path.value(k, n * factor));
        }
        let mut next = z.clone();
        next.axpy(dt, &g)?;
        if !base.noise.is_deterministic() {
            next.axpy(T::one(), &base.noise.apply(t, &z, &dw)?)?;
        }
        if !next.is_finite() {
            return Err(Error::Step {
                step: n,
                source: Box::new(Error::InvalidParameter("test process blew up".into())),
            });
        }
        z = next;
        drift.push(g);
        let t_next = T::from_usize(n + 1).unwrap() * dt;
        g = eval(t_next, &z)?;
        trajectory.times.push(t_next);
        trajectory.states.push(z.clone());
        trajectory.eta.push(g.clone());
    }
    Ok(TestProcess {
        z0: z0.clone(),
        spec: spec.clone(),
        trajectory,
        drift,
    })
}

/// Cumulative per-path ingredients of both sides of the inequality.
///
/// Integrals use the left-endpoint rule on the recorded grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SviPathTerms<T: Real> {
    pub times: Vec<T>,
    /// `||X_k - Z_k||^2_{H^-1}`.
    pub dist_sq: Vec<T>,
    /// `int_0^{t_k} phi(X)`.
    pub int_phi_x: Vec<T>,
    /// `int_0^{t_k} phi(Z)`.
    pub int_phi_z: Vec<T>,
    /// `int_0^{t_k} (G, X - Z)_{H^-1}`.
    pub int_pairing: Vec<T>,
    /// `int_0^{t_k} ||X - Z||^2_{H^-1}`.
    pub int_dist_sq: Vec<T>,
    /// `||x0||^2_{L^2_h}`.
    pub x0_l2_sq: T,
    pub seed: u64,
}

impl<T: Real> SviPathTerms<T> {
    pub fn lhs(&self, k: usize) -> T {
        self.dist_sq[k] + T::lit(2.0) * self.int_phi_x[k]
    }

    pub fn rhs(&self, k: usize, c: T) -> T {
        self.dist_sq[0]
            + T::lit(2.0) * (self.int_phi_z[k] - self.int_pairing[k])
            + c * self.int_dist_sq[k]
    }
}

/// Evaluates the inequality terms along one coupled pair `(X, Z)`.
pub fn svi_path_terms<T: Real>(
    lap: &DirichletLaplacian<T>,
    nl: &PowerNonlinearity<T>,
    x: &Trajectory<T>,
    z: &TestProcess<T>,
) -> Result<SviPathTerms<T>> {
    let zt = &z.trajectory;
    if x.path_seed != zt.path_seed {
        return Err(Error::PathMismatch(format!(
            "X uses path {}, Z uses path {}",
            x.path_seed, zt.path_seed
        )));
    }
    if x.times != zt.times {
        return Err(Error::Incompatible(
            "X and Z must share the time grid (record X at every step)".into(),
        ));
    }
    let nt = x.times.len();
    let mut out = SviPathTerms {
        times: x.times.clone(),
        dist_sq: Vec::with_capacity(nt),
        int_phi_x: Vec::with_capacity(nt),
        int_phi_z: Vec::with_capacity(nt),
        int_pairing: Vec::with_capacity(nt),
        int_dist_sq: Vec::with_capacity(nt),
        x0_l2_sq: x.states[0].l2_norm_sq(),
        seed: x.path_seed,
    };
    let (mut ix, mut iz, mut ip, mut id) = (T::zero(), T::zero(), T::zero(), T::zero());
    let mut prev: Option<(T, T, T, T)> = None;
    for k in 0..nt {
        if let Some((px, pz, pp, pd)) = prev {
            let dt = x.times[k] - x.times[k - 1];
            ix += dt * px;
            iz += dt * pz;
            ip += dt * pp;
            id += dt * pd;
        }
        let diff = x.states[k].sub(&zt.states[k])?;
        let d = lap.h_minus1_norm_sq(&diff)?;
        out.dist_sq.push(d);
        out.int_phi_x.push(ix);
        out.int_phi_z.push(iz);
        out.int_pairing.push(ip);
        out.int_dist_sq.push(id);
        if k + 1 < nt {
            let pairing = lap.h_minus1_inner(&z.drift[k], &diff)?;
            prev = Some((
                x.states[k].varphi_energy(nl),
                zt.states[k].varphi_energy(nl),
                pairing,
                d,
            ));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SviReport {
    pub times: Vec<f64>,
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    /// `rhs - lhs`.
    pub margins: Vec<f64>,
    /// `2 std / sqrt(M)` of the per-path margin.
    pub half_widths: Vec<f64>,
    /// `a dt + half_width` with `a = 10 (1 + E||x0||^2_{L^2_h})`.
    pub tolerance: Vec<f64>,
    pub c: f64,
    /// Smallest `C >= 0` making every mean margin nonnegative (`None` if none does).
    pub c_min: Option<f64>,
    pub dt: f64,
    pub paths: usize,
    /// Smallest `margin + tolerance` over all times.
    pub worst_slack: f64,
    pub passed: bool,
}

impl SviReport {
    /// Aggregates per-path terms for a given constant `c`.
    pub fn from_terms<T: Real>(terms: &[SviPathTerms<T>], c: T) -> Result<Self> {
        let first = terms
            .first()
            .ok_or_else(|| Error::InvalidParameter("no paths".into()))?;
        if terms.iter().any(|t| t.times != first.times) {
            return Err(Error::Incompatible(
                "paths recorded on different time grids".into(),
            ));
        }
        let nt = first.times.len();
        let m = T::from_usize(terms.len()).unwrap();
        let dt = if nt > 1 {
            first.times[1] - first.times[0]
        } else {
            T::zero()
        };
        let x0_sq: Vec<T> = terms.iter().map(|t| t.x0_l2_sq).collect();
        let a = T::lit(10.0) * (T::one() + mean(&x0_sq));
        let mut rep = SviReport {
            times: first.times.iter().map(|t| t.as_f64()).collect(),
            lhs: Vec::with_capacity(nt),
            rhs: Vec::with_capacity(nt),
            margins: Vec::with_capacity(nt),
            half_widths: Vec::with_capacity(nt),
            tolerance: Vec::with_capacity(nt),
            c: c.as_f64(),
            c_min: Some(0.0),
            dt: dt.as_f64(),
            paths: terms.len(),
            worst_slack: f64::INFINITY,
            passed: true,
        };
        for k in 0..nt {
            let lhs: Vec<T> = terms.iter().map(|t| t.lhs(k)).collect();
            let rhs: Vec<T> = terms.iter().map(|t| t.rhs(k, c)).collect();
            let margin: Vec<T> = rhs.iter().zip(&lhs).map(|(r, l)| *r - *l).collect();
            let mean_margin = mean(&margin);
            let hw = if terms.len() > 1 {
                T::lit(2.0) * sample_std(&margin) / m.sqrt()
            } else {
                T::zero()
            };
            let tol = a * dt + hw;
            rep.lhs.push(mean(&lhs).as_f64());
            rep.rhs.push(mean(&rhs).as_f64());
            rep.margins.push(mean_margin.as_f64());
            rep.half_widths.push(hw.as_f64());
            rep.tolerance.push(tol.as_f64());
            rep.worst_slack = rep.worst_slack.min((mean_margin + tol).as_f64());
            rep.passed &= mean_margin >= -tol;
            let rhs0: Vec<T> = terms
                .iter()
                .map(|t| t.rhs(k, T::zero()) - t.lhs(k))
                .collect();
            let base = mean(&rhs0);
            if base < T::zero() {
                let ints: Vec<T> = terms.iter().map(|t| t.int_dist_sq[k]).collect();
                let int = mean(&ints);
                rep.c_min = match rep.c_min {
                    Some(cur) if int > T::zero() => Some(cur.max((-base / int).as_f64())),
                    _ => None,
                };
            }
        }
        Ok(rep)
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,lhs,rhs,margin,halfwidth,tolerance")?;
        for k in 0..self.times.len() {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                self.times[k],
                self.lhs[k],
                self.rhs[k],
                self.margins[k],
                self.half_widths[k],
                self.tolerance[k]
            )?;
        }
        Ok(())
    }
}

/// Evaluates the inequality over coupled ensembles (`xs[i]` and `zs[i]` share a path).
pub fn svi_residual<T: Real>(
    lap: &DirichletLaplacian<T>,
    nl: &PowerNonlinearity<T>,
    xs: &[Trajectory<T>],
    zs: &[TestProcess<T>],
    c: T,
) -> Result<SviReport> {
    if xs.len() != zs.len() {
        return Err(Error::PathMismatch(format!(
            "{} X paths against {} Z paths",
            xs.len(),
            zs.len()
        )));
    }
    let terms: Vec<SviPathTerms<T>> = xs
        .iter()
        .zip(zs)
        .map(|(x, z)| svi_path_terms(lap, nl, x, z))
        .collect::<Result<_>>()?;
    SviReport::from_terms(&terms, c)
}

/// Per-step comparison of `(eta, X - Z)_{H^-1}` with `phi(Z) - phi(X)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub times: Vec<f64>,
    pub pairing: Vec<f64>,
    /// `phi(Z) - phi(X)`.
    pub energy_gap: Vec<f64>,
    /// `phi(X) - phi_reg(X) + eps/2 (||Z||^2 - ||X||^2)^+`, the slack implied by convexity.
    pub slack: Vec<f64>,
    /// A priori bound on `slack` from the regularization parameter.
    pub certified_slack: Vec<f64>,
    /// Largest `pairing - energy_gap - slack` (rounding-level when the check passes).
    pub worst_excess: f64,
    pub violations: usize,
    pub passed: bool,
}

impl SelectionReport {
    pub fn sup_slack(&self) -> f64 {
        self.slack.iter().copied().fold(0.0, f64::max)
    }
}

/// Checks the selection inequality along a trajectory carrying `eta` for the
/// regularization `(eps_visc, reg)` that produced it.
pub fn selection_inequality_check<T: Real>(
    lap: &DirichletLaplacian<T>,
    nl: &PowerNonlinearity<T>,
    eps_visc: T,
    reg: &Regularization<T>,
    x: &Trajectory<T>,
    z: &Trajectory<T>,
) -> Result<SelectionReport> {
    if !x.has_eta() {
        return Err(Error::MissingEta);
    }
    if x.states.len() != z.states.len() {
        return Err(Error::Incompatible("X and Z have different lengths".into()));
    }
    let half = T::lit(0.5);
    let length = x.states[0].domain().length();
    let mut rep = SelectionReport {
        times: x.times.iter().map(|t| t.as_f64()).collect(),
        pairing: Vec::new(),
        energy_gap: Vec::new(),
        slack: Vec::new(),
        certified_slack: Vec::new(),
        worst_excess: f64::NEG_INFINITY,
        violations: 0,
        passed: true,
    };
    for ((xs, zs), eta) in x.states.iter().zip(&z.states).zip(&x.eta) {
        let pairing = lap.h_minus1_inner(eta, &xs.sub(zs)?)?;
        let phi_x = xs.varphi_energy(nl);
        let phi_z = zs.varphi_energy(nl);
        let reg_x: Vec<T> = xs.values().iter().map(|&v| reg.psi(nl, v)).collect();
        let phi_reg_x = xs.domain().h() * crate::real::pairwise_sum(&reg_x);
        let visc = (half * eps_visc * (zs.l2_norm_sq() - xs.l2_norm_sq())).max(T::zero());
        let slack = phi_x - phi_reg_x + visc;
        let certified = visc
            + match reg {
                Regularization::Yosida(y) => {
                    half * y.eps() * (length + (nl.m() + T::one()) * phi_x)
                }
                Regularization::Delta(d) => length * d.psi_error_bound(nl),
                Regularization::None => T::zero(),
            };
        let gap = phi_z - phi_x;
        let excess = pairing - gap - slack;
        let scale = T::one() + pairing.abs() + phi_x + phi_z + phi_reg_x.abs();
        if excess > T::lit(1e-9) * scale || slack > certified + T::lit(1e-12) * scale {
            rep.violations += 1;
        }
        rep.worst_excess = rep.worst_excess.max(excess.as_f64());
        rep.pairing.push(pairing.as_f64());
        rep.energy_gap.push(gap.as_f64());
        rep.slack.push(slack.as_f64());
        rep.certified_slack.push(certified.as_f64());
    }
    rep.passed = rep.violations == 0;
    Ok(rep)
}

/// Replaces `eta` along `x` by the drift of another regularization.
pub fn recompute_eta<T: Real>(
    x: &Trajectory<T>,
    nl: &PowerNonlinearity<T>,
    eps_visc: T,
    reg: Regularization<T>,
) -> Result<Trajectory<T>> {
    let first = x
        .states
        .first()
        .ok_or_else(|| Error::InvalidParameter("empty trajectory".into()))?;
    let t_end = x.times.last().copied().unwrap_or(x.dt).max(x.dt);
    let mut cfg = SolverConfig::new(*first.domain(), nl.m(), reg, x.dt, t_end)?;
    cfg.eps_visc = eps_visc;
    let solver = Solver::new(cfg)?;
    let mut out = x.clone();
    out.eta = x
        .states
        .iter()
        .map(|s| solver.drift(s))
        .collect::<Result<_>>()?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlackLadderReport {
    pub eps: Vec<f64>,
    pub sup_slack: Vec<f64>,
    pub all_passed: bool,
    pub fit: RateFit,
}

/// Freezes `X` and `Z`, re-evaluates the selection under Moreau-Yosida
/// regularization for each `eps`, and fits the decay of the sup slack.
pub fn slack_ladder<T: Real>(
    lap: &DirichletLaplacian<T>,
    nl: &PowerNonlinearity<T>,
    x: &Trajectory<T>,
    z: &Trajectory<T>,
    eps: &[T],
) -> Result<SlackLadderReport> {
    let mut sup = Vec::with_capacity(eps.len());
    let mut all_passed = true;
    for &e in eps {
        let reg = Regularization::yosida(e)?;
        let xe = recompute_eta(x, nl, T::zero(), reg)?;
        let rep = selection_inequality_check(lap, nl, T::zero(), &reg, &xe, z)?;
        all_passed &= rep.passed;
        sup.push(rep.sup_slack());
    }
    let eps_f: Vec<f64> = eps.iter().map(|e| e.as_f64()).collect();
    let fit = RateFit::fit(eps_f.iter().copied().zip(sup.iter().copied()).collect())?;
    Ok(SlackLadderReport {
        eps: eps_f,
        sup_slack: sup,
        all_passed,
        fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Domain1D;
    use crate::noise::NoiseModel;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn base(m: f64, reg: Regularization<f64>, n: usize, dt: f64, t_end: f64) -> SolverConfig<f64> {
        SolverConfig::new(Domain1D::unit(n).unwrap(), m, reg, dt, t_end).unwrap()
    }

    fn quiet(cfg: &SolverConfig<f64>) -> WienerPath {
        WienerPath::sample(0, cfg.dt, cfg.n_steps(), 0).unwrap()
    }

    #[test]
    fn zero_drift_without_noise_is_constant() {
        let cfg = base(0.0, Regularization::delta(0.1).unwrap(), 15, 1e-2, 0.2);
        let z0 = GridFunction::from_fn(cfg.domain, |x| x * (1.0 - x));
        let z = make_test_process(&DriftSpec::Zero, &z0, &quiet(&cfg), &cfg).unwrap();
        assert_eq!(z.trajectory.len(), 21);
        assert!(z.trajectory.states.iter().all(|s| s == &z0));
    }

    #[test]
    fn constant_drift_integrates_exactly() {
        let cfg = base(0.0, Regularization::delta(0.1).unwrap(), 15, 1e-2, 0.2);
        let z0 = GridFunction::from_fn(cfg.domain, |x| x);
        let c = GridFunction::from_fn(cfg.domain, |x| 1.0 - x);
        let z =
            make_test_process(&DriftSpec::Constant(c.clone()), &z0, &quiet(&cfg), &cfg).unwrap();
        for (t, s) in z.trajectory.times.iter().zip(&z.trajectory.states) {
            for ((a, b), v) in z0.values().iter().zip(c.values()).zip(s.values()) {
                assert_abs_diff_eq!(*v, a + t * b, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn explicit_identity_holds_with_noise() {
        let mut cfg = base(0.0, Regularization::delta(0.1).unwrap(), 15, 1e-2, 0.1);
        cfg.noise =
            NoiseModel::linear_multiplicative(vec![GridFunction::from_fn(cfg.domain, |_| 0.5)])
                .unwrap();
        let path = WienerPath::sample(3, cfg.dt, cfg.n_steps(), 1).unwrap();
        let z0 = GridFunction::from_fn(cfg.domain, |x| (PI * x).sin());
        let custom: DriftFn<f64> = Arc::new(|t, z: &GridFunction<f64>| Ok(z.scale(-1.0 - t)));
        let z = make_test_process(&DriftSpec::Custom(custom), &z0, &path, &cfg).unwrap();
        let st = &z.trajectory.states;
        for n in 0..cfg.n_steps() {
            let dw = [path.increment(0, n)];
            let expected = st[n]
                .add(&z.drift[n].scale(cfg.dt))
                .unwrap()
                .add(&cfg.noise.apply(n as f64 * cfg.dt, &st[n], &dw).unwrap())
                .unwrap();
            assert!(expected.sub(&st[n + 1]).unwrap().sup_norm() < 1e-14);
        }
    }

    #[test]
    fn regularized_drift_reproduces_solver() {
        let mut cfg = base(0.0, Regularization::delta(0.05).unwrap(), 31, 1e-3, 0.02);
        cfg.noise =
            NoiseModel::linear_multiplicative(vec![GridFunction::from_fn(cfg.domain, |_| 1.0)])
                .unwrap();
        let path = WienerPath::sample(9, cfg.dt, cfg.n_steps(), 1).unwrap();
        let x0 = GridFunction::from_fn(cfg.domain, |x| (PI * x).sin());
        let x = Solver::new(cfg.clone())
            .unwrap()
            .simulate(&x0, &path)
            .unwrap();
        let z =
            make_test_process(&DriftSpec::RegularizedDrift(cfg.clone()), &x0, &path, &cfg).unwrap();
        assert_eq!(x.states, z.trajectory.states);
        let lap = DirichletLaplacian::new(cfg.domain);
        let rep = svi_residual(&lap, &cfg.nl, &[x], &[z], 0.0).unwrap();
        assert!(rep.margins.iter().all(|&m| m == 0.0), "{:?}", rep.margins);
        assert!(rep.passed);
    }

    #[test]
    fn regularized_drift_checks_compatibility() {
        let cfg = base(0.0, Regularization::delta(0.05).unwrap(), 31, 1e-3, 0.02);
        let mut other = cfg.clone();
        other.dt = 2e-3;
        let x0 = GridFunction::zeros(cfg.domain);
        let err = make_test_process(&DriftSpec::RegularizedDrift(other), &x0, &quiet(&cfg), &cfg);
        assert!(matches!(err, Err(Error::Incompatible(_))));
    }

    #[test]
    fn linear_two_mode_closed_form() {
        let d = Domain1D::new(0.0, PI, 63).unwrap();
        let dt = 1e-3;
        let cfg = SolverConfig::new(d, 1.0, Regularization::None, dt, 0.5).unwrap();
        let lap = DirichletLaplacian::new(d);
        let (l1, l2) = (lap.eigenvalues()[0], lap.eigenvalues()[1]);
        let (a, b) = (1.0, 0.7);
        let x0 = lap.eigenvector(1).scale(a);
        let z0 = lap.eigenvector(2).scale(b);
        let path = quiet(&cfg);
        let x = Solver::new(cfg.clone())
            .unwrap()
            .simulate(&x0, &path)
            .unwrap();
        let z =
            make_test_process(&DriftSpec::RegularizedDrift(cfg.clone()), &z0, &path, &cfg).unwrap();
        let rep = svi_residual(&lap, &cfg.nl, &[x], &[z], 0.0).unwrap();
        for (t, m) in rep.times.iter().zip(&rep.margins) {
            let exact = a * a * (1.0 - (-2.0 * l1 * t).exp()) / (2.0 * l1)
                + b * b * (1.0 - (-2.0 * l2 * t).exp()) / (2.0 * l2);
            assert!(
                (m - exact).abs() <= 4.0 * dt * (1.0 + exact),
                "t={t} {m} vs {exact}"
            );
        }
        assert!(rep.passed);
        assert_eq!(rep.c_min, Some(0.0));
    }

    #[test]
    fn margins_monotone_in_c() {
        let mut cfg = base(0.0, Regularization::delta(0.05).unwrap(), 31, 1e-3, 0.05);
        cfg.noise =
            NoiseModel::linear_multiplicative(vec![GridFunction::from_fn(cfg.domain, |_| 1.0)])
                .unwrap();
        let lap = DirichletLaplacian::new(cfg.domain);
        let x0 = GridFunction::from_fn(cfg.domain, |x| (PI * x).sin());
        let (mut xs, mut zs) = (Vec::new(), Vec::new());
        for seed in 0..4 {
            let path = WienerPath::sample(seed, cfg.dt, cfg.n_steps(), 1).unwrap();
            xs.push(
                Solver::new(cfg.clone())
                    .unwrap()
                    .simulate(&x0, &path)
                    .unwrap(),
            );
            zs.push(make_test_process(&DriftSpec::Zero, &x0, &path, &cfg).unwrap());
        }
        let mut prev: Option<SviReport> = None;
        for c in [0.0, 0.5, 1.0, 4.0] {
            let rep = svi_residual(&lap, &cfg.nl, &xs, &zs, c).unwrap();
            if let Some(p) = &prev {
                assert!(rep.margins.iter().zip(&p.margins).all(|(a, b)| a >= b));
            }
            prev = Some(rep);
        }
        assert!(svi_residual(&lap, &cfg.nl, &xs, &zs[..3], 0.0).is_err());
        let mut swapped = zs.clone();
        swapped.swap(0, 1);
        assert!(matches!(
            svi_residual(&lap, &cfg.nl, &xs, &swapped, 0.0),
            Err(Error::PathMismatch(_))
        ));
    }

    #[test]
    fn c_min_recovers_linear_deficit() {
        let t = SviPathTerms {
            times: vec![0.0, 1.0, 2.0],
            dist_sq: vec![0.0, 1.0, 1.0],
            int_phi_x: vec![0.0; 3],
            int_phi_z: vec![0.0; 3],
            int_pairing: vec![0.0; 3],
            int_dist_sq: vec![0.0, 0.5, 2.0],
            x0_l2_sq: 0.0,
            seed: 0,
        };
        let rep = SviReport::from_terms(std::slice::from_ref(&t), 0.0).unwrap();
        assert_eq!(rep.c_min, Some(2.0));
        let rep = SviReport::from_terms(&[t], 2.0).unwrap();
        assert!(rep.margins.iter().all(|&m| m >= 0.0));
    }

    #[test]
    fn selection_same_process() {
        let cfg = base(0.0, Regularization::delta(1e-2).unwrap(), 31, 1e-3, 0.02);
        let lap = DirichletLaplacian::new(cfg.domain);
        let x0 = GridFunction::from_fn(cfg.domain, |x| (2.0 * PI * x).sin());
        let x = Solver::new(cfg.clone())
            .unwrap()
            .simulate(&x0, &quiet(&cfg))
            .unwrap();
        let rep =
            selection_inequality_check(&lap, &cfg.nl, 0.0, &cfg.regularization, &x, &x).unwrap();
        assert!(rep.passed);
        assert!(rep.slack.iter().all(|&s| s >= 0.0));
        assert!(rep.pairing.iter().all(|&p| p == 0.0));
        let mut bare = x.clone();
        bare.eta.clear();
        assert_eq!(
            selection_inequality_check(&lap, &cfg.nl, 0.0, &cfg.regularization, &bare, &x),
            Err(Error::MissingEta)
        );
    }

    #[test]
    fn selection_linear_case_is_exact() {
        let d = Domain1D::unit(31).unwrap();
        let cfg = SolverConfig::new(d, 1.0, Regularization::None, 1e-3, 0.02).unwrap();
        let lap = DirichletLaplacian::new(d);
        let x0 = GridFunction::from_fn(d, |x| (PI * x).sin());
        let z0 = GridFunction::from_fn(d, |x| x * (1.0 - x));
        let x = Solver::new(cfg.clone())
            .unwrap()
            .simulate(&x0, &quiet(&cfg))
            .unwrap();
        let z = make_test_process(&DriftSpec::Zero, &z0, &quiet(&cfg), &cfg).unwrap();
        let rep = selection_inequality_check(
            &lap,
            &cfg.nl,
            0.0,
            &Regularization::None,
            &x,
            &z.trajectory,
        )
        .unwrap();
        assert!(rep.passed);
        assert!(rep.slack.iter().all(|&s| s == 0.0));
        // for a quadratic energy the gap exceeds the pairing by exactly ||X - Z||^2 / 2
        for (k, (p, g)) in rep.pairing.iter().zip(&rep.energy_gap).enumerate() {
            let half_dist = 0.5
                * x.states[k]
                    .sub(&z.trajectory.states[k])
                    .unwrap()
                    .l2_norm_sq();
            assert_abs_diff_eq!(g - p, half_dist, epsilon = 1e-10);
        }
    }

    #[test]
    fn selection_random_z_bounded_by_slack() {
        let d = Domain1D::unit(127).unwrap();
        let cfg =
            SolverConfig::new(d, 0.0, Regularization::delta(1e-2).unwrap(), 1e-3, 0.05).unwrap();
        let lap = DirichletLaplacian::new(d);
        let x0 = GridFunction::from_fn(d, |x| (3.0 * PI * x).sin());
        let x = Solver::new(cfg.clone())
            .unwrap()
            .simulate(&x0, &quiet(&cfg))
            .unwrap();
        let mut s = 17u64;
        let mut z = x.clone();
        for st in z.states.iter_mut() {
            for v in st.values_mut() {
                s = s
                    .wrapping_mul(6364136223846793005)
                    .wrapping_add(1442695040888963407);
                *v = 2.0 * (((s >> 11) as f64) / ((1u64 << 53) as f64) - 0.5);
            }
        }
        let rep =
            selection_inequality_check(&lap, &cfg.nl, 0.0, &cfg.regularization, &x, &z).unwrap();
        assert!(rep.passed, "worst excess {}", rep.worst_excess);
    }

    #[test]
    fn frozen_yosida_ladder_is_linear() {
        let d = Domain1D::unit(63).unwrap();
        let cfg =
            SolverConfig::new(d, 0.0, Regularization::delta(1e-2).unwrap(), 1e-3, 0.02).unwrap();
        let lap = DirichletLaplacian::new(d);
        let x0 = GridFunction::from_fn(d, |x| (PI * x).sin());
        let x = Solver::new(cfg.clone())
            .unwrap()
            .simulate(&x0, &quiet(&cfg))
            .unwrap();
        let z = make_test_process(&DriftSpec::Zero, &x0.scale(0.5), &quiet(&cfg), &cfg).unwrap();
        let rep = slack_ladder(
            &lap,
            &cfg.nl,
            &x,
            &z.trajectory,
            &[1e-1, 5e-2, 2.5e-2, 1.25e-2],
        )
        .unwrap();
        assert!(rep.all_passed);
        assert!(rep.fit.slope >= 0.9, "{:?}", rep.fit);
    }
}
