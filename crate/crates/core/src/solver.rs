//! Time integration of the regularized equation
//! `dX = (eps Delta X + Delta phi_reg(X)) dt + B(t, X) dW` on the Dirichlet grid.
//!
//! Two schemes are provided. `Imex` treats the viscosity implicitly and the
//! nonlinear diffusion explicitly, so it is limited by
//! `dt <= h^2 / (2 Lip(phi_reg))`. `Implicit` is backward Euler in the drift,
//! solved by damped Newton; it is unconditionally stable and is the scheme
//! of choice as the regularization vanishes. In both cases the noise is
//! evaluated at the left endpoint (Euler-Maruyama).

use crate::error::{Error, Result};
use crate::grid::{solve_tridiagonal, DirichletLaplacian, Domain1D, GridFunction};
use crate::noise::{NoiseModel, WienerPath};
use crate::real::{pairwise_sum, Real};
use crate::scalar::{PowerNonlinearity, Regularization};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Imex,
    Implicit,
}

#[derive(Debug, Clone)]
pub struct SolverConfig<T: Real> {
    pub nl: PowerNonlinearity<T>,
    /// Vanishing viscosity `eps >= 0`.
    pub eps_visc: T,
    pub regularization: Regularization<T>,
    pub scheme: Scheme,
    pub dt: T,
    pub t_end: T,
    pub domain: Domain1D<T>,
    pub noise: NoiseModel<T>,
    /// Bound on the `L^2_h` norm of the implicit residual.
    pub newton_tol: T,
    pub newton_max_iter: usize,
    /// Keep every `record_every`-th state (the final state is always kept).
    pub record_every: usize,
}

impl<T: Real> SolverConfig<T> {
    /// Implicit, noise-free configuration with default Newton settings.
    pub fn new(
        domain: Domain1D<T>,
        m: T,
        regularization: Regularization<T>,
        dt: T,
        t_end: T,
    ) -> Result<Self> {
        let cfg = Self {
            nl: PowerNonlinearity::new(m)?,
            eps_visc: T::zero(),
            regularization,
            scheme: Scheme::Implicit,
            dt,
            t_end,
            domain,
            noise: NoiseModel::none(),
            newton_tol: T::lit(1e-10).max(T::lit(1e3) * T::epsilon()),
            newton_max_iter: 100,
            record_every: 1,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > T::zero()) || !self.dt.is_finite() {
            return Err(Error::OutOfRange {
                what: "dt must be positive",
                value: self.dt.as_f64(),
            });
        }
        if !(self.t_end >= self.dt) {
            return Err(Error::OutOfRange {
                what: "horizon must be at least one step",
                value: self.t_end.as_f64(),
            });
        }
        if !(self.eps_visc >= T::zero()) {
            return Err(Error::OutOfRange {
                what: "viscosity must be >= 0",
                value: self.eps_visc.as_f64(),
            });
        }
        if !(self.newton_tol > T::zero()) || self.newton_max_iter == 0 {
            return Err(Error::InvalidParameter(
                "newton tolerance and iteration cap must be positive".into(),
            ));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidParameter("record_every must be >= 1".into()));
        }
        self.regularization.check_admissible(&self.nl)
    }

    /// Number of time steps, `T / dt` rounded to the nearest integer.
    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt)
            .round()
            .to_usize()
            .unwrap_or(0)
            .max(1)
    }

    /// Largest `dt` the explicit part of the IMEX scheme tolerates.
    pub fn cfl_limit(&self) -> T {
        let h = self.domain.h();
        h * h / (T::lit(2.0) * self.regularization.lipschitz(&self.nl))
    }
}

/// States recorded along one simulated path.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T: Real> {
    pub times: Vec<T>,
    pub states: Vec<GridFunction<T>>,
    /// Drift `eps Delta X + Delta phi_reg(X)` evaluated at each recorded state.
    pub eta: Vec<GridFunction<T>>,
    pub path_seed: u64,
    pub dt: T,
}

impl<T: Real> Trajectory<T> {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn has_eta(&self) -> bool {
        !self.eta.is_empty() && self.eta.len() == self.states.len()
    }

    pub fn final_state(&self) -> &GridFunction<T> {
        self.states
            .last()
            .expect("trajectory has at least the initial state")
    }

    /// `t,node,x,value` rows for every recorded state.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,node,x,value")?;
        for (t, s) in self.times.iter().zip(&self.states) {
            for (j, (x, v)) in s.domain().nodes().zip(s.values()).enumerate() {
                writeln!(w, "{t},{},{x},{v}", j + 1)?;
            }
        }
        Ok(())
    }
}

/// `eps/2 ||x||^2_{L^2_h} + sum_j h psi_reg(x_j)`, the functional whose
/// `H^{-1}` gradient flow the noise-free dynamics follow.
pub fn lyapunov_energy<T: Real>(
    nl: &PowerNonlinearity<T>,
    eps_visc: T,
    reg: &Regularization<T>,
    x: &GridFunction<T>,
) -> T {
    let terms: Vec<T> = x.values().iter().map(|&v| reg.psi(nl, v)).collect();
    T::lit(0.5) * eps_visc * x.l2_norm_sq() + x.domain().h() * pairwise_sum(&terms)
}

/// `J^{1/n} x0 = (I - Delta_h / n)^{-1} x0`, the smoothing of initial data.
pub fn regularize_initial_datum<T: Real>(
    lap: &DirichletLaplacian<T>,
    x0: &GridFunction<T>,
    n: usize,
) -> Result<GridFunction<T>> {
    if n == 0 {
        return Err(Error::InvalidParameter(
            "smoothing index must be >= 1".into(),
        ));
    }
    lap.solve_resolvent(T::one() / T::from_usize(n).unwrap(), x0)
}

/// Time stepper bound to one configuration.
#[derive(Debug, Clone)]
pub struct Solver<T: Real> {
    cfg: SolverConfig<T>,
    lap: DirichletLaplacian<T>,
}

const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 40;

impl<T: Real> Solver<T> {
    pub fn new(cfg: SolverConfig<T>) -> Result<Self> {
        cfg.validate()?;
        let lap = DirichletLaplacian::new(cfg.domain);
        Ok(Self { cfg, lap })
    }

    pub fn config(&self) -> &SolverConfig<T> {
        &self.cfg
    }

    pub fn laplacian(&self) -> &DirichletLaplacian<T> {
        &self.lap
    }

    fn check(&self, x: &GridFunction<T>) -> Result<()> {
        if *x.domain() != self.cfg.domain {
            return Err(Error::DomainMismatch);
        }
        if !x.is_finite() {
            return Err(Error::InvalidParameter("state is not finite".into()));
        }
        Ok(())
    }

    fn phi_reg(&self, x: &[T]) -> Vec<T> {
        x.iter()
            .map(|&v| self.cfg.regularization.phi(&self.cfg.nl, v))
            .collect()
    }

    /// `eps Delta x + Delta phi_reg(x)`.
    pub fn drift(&self, x: &GridFunction<T>) -> Result<GridFunction<T>> {
        self.check(x)?;
        let eps = self.cfg.eps_visc;
        let combined: Vec<T> = x
            .values()
            .iter()
            .map(|&v| eps * v + self.cfg.regularization.phi(&self.cfg.nl, v))
            .collect();
        Ok(GridFunction::from_raw(
            self.cfg.domain,
            self.lap.apply_slice(&combined),
        ))
    }

    /// Lyapunov functional `eps/2 ||x||^2 + sum_j h psi_reg(x_j)`.
    pub fn lyapunov(&self, x: &GridFunction<T>) -> T {
        lyapunov_energy(&self.cfg.nl, self.cfg.eps_visc, &self.cfg.regularization, x)
    }

    fn noisy_rhs(&self, x: &GridFunction<T>, t: T, dw: &[T]) -> Result<GridFunction<T>> {
        let mut rhs = x.clone();
        if !self.cfg.noise.is_deterministic() {
            rhs.axpy(T::one(), &self.cfg.noise.apply(t, x, dw)?)?;
        } else if !dw.is_empty() {
            return Err(Error::ModeMismatch {
                expected: 0,
                got: dw.len(),
            });
        }
        Ok(rhs)
    }

    /// One IMEX step: `(I - dt eps Delta) X' = X + dt Delta phi_reg(X) + B(t, X) dW`.
    pub fn step_imex(&self, x: &GridFunction<T>, t: T, dw: &[T]) -> Result<GridFunction<T>> {
        self.check(x)?;
        let limit = self.cfg.cfl_limit();
        if self.cfg.dt > limit {
            return Err(Error::Cfl {
                dt: self.cfg.dt.as_f64(),
                required: limit.as_f64(),
            });
        }
        let mut rhs = self.noisy_rhs(x, t, dw)?;
        let lap_phi = self.lap.apply_slice(&self.phi_reg(x.values()));
        for (r, l) in rhs.values_mut().iter_mut().zip(lap_phi) {
            *r += self.cfg.dt * l;
        }
        let dt = self.cfg.dt;
        let out = if self.cfg.eps_visc > T::zero() {
            self.lap
                .shifted_solve(T::one(), dt * self.cfg.eps_visc, rhs.values())
        } else {
            rhs.into_values()
        };
        Ok(GridFunction::from_raw(self.cfg.domain, out))
    }

    /// Residual `y - dt (eps Delta y + Delta phi_reg(y)) - rhs`.
    fn implicit_residual(&self, y: &[T], rhs: &[T]) -> Vec<T> {
        let eps = self.cfg.eps_visc;
        let combined: Vec<T> = y
            .iter()
            .map(|&v| eps * v + self.cfg.regularization.phi(&self.cfg.nl, v))
            .collect();
        let lap = self.lap.apply_slice(&combined);
        y.iter()
            .zip(&lap)
            .zip(rhs)
            .map(|((&yi, &li), &ri)| yi - self.cfg.dt * li - ri)
            .collect()
    }

    /// Convex functional whose `L^2_h` gradient is `(-Delta)^{-1} F(y) / dt`.
    fn implicit_energy(&self, y: &[T], rhs: &[T]) -> T {
        let d = self.cfg.domain;
        let diff: Vec<T> = y.iter().zip(rhs).map(|(&a, &b)| a - b).collect();
        let w = self.lap.shifted_solve(T::zero(), T::one(), &diff);
        let pair: Vec<T> = diff.iter().zip(&w).map(|(&a, &b)| a * b).collect();
        let psi: Vec<T> = y
            .iter()
            .map(|&v| self.cfg.regularization.psi(&self.cfg.nl, v))
            .collect();
        let sq: Vec<T> = y.iter().map(|&v| v * v).collect();
        let h = d.h();
        h * pairwise_sum(&pair) / (T::lit(2.0) * self.cfg.dt)
            + T::lit(0.5) * self.cfg.eps_visc * h * pairwise_sum(&sq)
            + h * pairwise_sum(&psi)
    }

    fn l2h(&self, v: &[T]) -> T {
        let sq: Vec<T> = v.iter().map(|&a| a * a).collect();
        (self.cfg.domain.h() * pairwise_sum(&sq)).sqrt()
    }

    /// One backward Euler step: `X' - dt (eps Delta X' + Delta phi_reg(X')) = X + B(t, X) dW`.
    ///
    /// Damped Newton on the tridiagonal Jacobian `I - dt Delta (eps + diag phi_reg'(X'))`.
    /// Steps are halved until the convex merit functional decreases (or, once
    /// that stalls at rounding level, until the residual decreases).
    pub fn step_implicit(&self, x: &GridFunction<T>, t: T, dw: &[T]) -> Result<GridFunction<T>> {
        self.check(x)?;
        let rhs = self.noisy_rhs(x, t, dw)?;
        let rhs = rhs.values();
        let n = rhs.len();
        let h = self.cfg.domain.h();
        let c = self.cfg.dt / (h * h);
        let eps = self.cfg.eps_visc;
        let tol = self.cfg.newton_tol;

        let mut y = rhs.to_vec();
        let mut f = self.implicit_residual(&y, rhs);
        let mut res = self.l2h(&f);
        let mut energy = self.implicit_energy(&y, rhs);
        for _ in 0..self.cfg.newton_max_iter {
            if res <= tol {
                return Ok(GridFunction::from_raw(self.cfg.domain, y));
            }
            let k: Vec<T> = y
                .iter()
                .map(|&v| eps + self.cfg.regularization.dphi(&self.cfg.nl, v))
                .collect();
            let diag: Vec<T> = k
                .iter()
                .map(|&kj| T::one() + T::lit(2.0) * c * kj)
                .collect();
            let lower: Vec<T> = (0..n)
                .map(|j| if j > 0 { -c * k[j - 1] } else { T::zero() })
                .collect();
            let upper: Vec<T> = (0..n)
                .map(|j| if j + 1 < n { -c * k[j + 1] } else { T::zero() })
                .collect();
            let neg_f: Vec<T> = f.iter().map(|&v| -v).collect();
            let dir = solve_tridiagonal(&lower, &diag, &upper, &neg_f);
            // directional derivative of the merit functional: h (w, dir) with -Delta w = F / dt
            let w = self.lap.shifted_solve(T::zero(), self.cfg.dt, &f);
            let slope =
                h * pairwise_sum(&w.iter().zip(&dir).map(|(&a, &b)| a * b).collect::<Vec<T>>());

            let mut alpha = T::one();
            let mut accepted = false;
            for _ in 0..MAX_HALVINGS {
                let cand: Vec<T> = y.iter().zip(&dir).map(|(&a, &d)| a + alpha * d).collect();
                let cand_f = self.implicit_residual(&cand, rhs);
                let cand_res = self.l2h(&cand_f);
                let cand_energy = self.implicit_energy(&cand, rhs);
                let sufficient =
                    cand_energy <= energy + T::lit(ARMIJO) * alpha * slope.min(T::zero());
                let stalled = (cand_energy - energy).abs()
                    <= T::lit(64.0) * T::epsilon() * energy.abs().max(T::one());
                if cand_res.is_finite() && (sufficient || (stalled && cand_res < res)) {
                    y = cand;
                    f = cand_f;
                    res = cand_res;
                    energy = cand_energy;
                    accepted = true;
                    break;
                }
                alpha *= T::lit(0.5);
            }
            if !accepted {
                break;
            }
        }
        if res <= tol {
            return Ok(GridFunction::from_raw(self.cfg.domain, y));
        }
        Err(Error::NewtonDivergence {
            iterations: self.cfg.newton_max_iter,
            residual: res.as_f64(),
        })
    }

    pub fn step(&self, x: &GridFunction<T>, t: T, dw: &[T]) -> Result<GridFunction<T>> {
        match self.cfg.scheme {
            Scheme::Imex => self.step_imex(x, t, dw),
            Scheme::Implicit => self.step_implicit(x, t, dw),
        }
    }

    /// Marches from `x0` over `[0, T]`, consuming `path` (coarsened to `dt` on the fly).
    pub fn simulate(&self, x0: &GridFunction<T>, path: &WienerPath) -> Result<Trajectory<T>> {
        self.check(x0)?;
        let factor = path_factor(&self.cfg, path)?;
        let steps = self.cfg.n_steps();
        let dt = self.cfg.dt;
        let modes = path.modes();
        let mut traj = Trajectory {
            times: vec![T::zero()],
            states: vec![x0.clone()],
            eta: vec![self.drift(x0)?],
            path_seed: path.seed(),
            dt,
        };
        let mut x = x0.clone();
        let mut dw = vec![T::zero(); modes];
        for n in 0..steps {
            let t = T::from_usize(n).unwrap() * dt;
            for (k, d) in dw.iter_mut().enumerate() {
                *d = T::lit(path.value(k, (n + 1) * factor) - path.value(k, n * factor));
            }
            x = self.step(&x, t, &dw).map_err(|e| Error::Step {
                step: n,
                source: Box::new(e),
            })?;
            if (n + 1) % self.cfg.record_every == 0 || n + 1 == steps {
                traj.times.push(T::from_usize(n + 1).unwrap() * dt);
                traj.eta.push(self.drift(&x)?);
                traj.states.push(x.clone());
            }
        }
        Ok(traj)
    }
}

/// Ratio between the solver step and the path's fine step.
pub(crate) fn path_factor<T: Real>(cfg: &SolverConfig<T>, path: &WienerPath) -> Result<usize> {
    if path.modes() != cfg.noise.modes() {
        return Err(Error::PathMismatch(format!(
            "path has {} modes, noise model {}",
            path.modes(),
            cfg.noise.modes()
        )));
    }
    let dt = cfg.dt.as_f64();
    let ratio = dt / path.dt();
    let factor = ratio.round();
    if factor < 1.0 || (factor * path.dt() - dt).abs() > 1e-9 * dt {
        return Err(Error::PathMismatch(format!(
            "path step {:e} does not divide solver step {dt:e}",
            path.dt()
        )));
    }
    let factor = factor as usize;
    if path.n_steps() < factor * cfg.n_steps() {
        return Err(Error::PathMismatch(format!(
            "path covers {:e}, need {:e}",
            path.horizon(),
            cfg.t_end.as_f64()
        )));
    }
    Ok(factor)
}

/// Runs several configurations on the identical Brownian path.
///
/// The configurations may differ only in viscosity, regularization, scheme
/// and time step; every time step must be a multiple of the path's step.
pub fn simulate_coupled<T: Real>(
    cfgs: &[SolverConfig<T>],
    x0: &GridFunction<T>,
    path: &WienerPath,
) -> Result<Vec<Trajectory<T>>> {
    let first = cfgs
        .first()
        .ok_or_else(|| Error::Incompatible("empty configuration list".into()))?;
    for c in &cfgs[1..] {
        if c.domain != first.domain {
            return Err(Error::Incompatible(
                "configurations live on different grids".into(),
            ));
        }
        if c.nl != first.nl {
            return Err(Error::Incompatible(
                "configurations use different exponents".into(),
            ));
        }
        if (c.t_end - first.t_end).abs() > T::lit(1e-9) * first.t_end {
            return Err(Error::Incompatible(
                "configurations use different horizons".into(),
            ));
        }
        if c.noise.modes() != first.noise.modes()
            || c.noise.lipschitz_constant() != first.noise.lipschitz_constant()
        {
            return Err(Error::Incompatible(
                "configurations use different noise models".into(),
            ));
        }
    }
    cfgs.iter()
        .map(|c| Solver::new(c.clone())?.simulate(x0, path))
        .collect()
}
