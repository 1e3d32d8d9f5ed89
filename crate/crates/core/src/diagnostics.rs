//! Monte-Carlo diagnostics over ensembles of trajectories: energy bounds,
//! coupled stability rates, contraction in `H^{-1}`, and extinction times.
//!
//! Expectations are sample means over paths, reduced in path order with a
//! fixed pairwise tree, so every statistic is a deterministic function of the
//! seed set regardless of the number of worker threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{DirichletLaplacian, GridFunction};
use crate::noise::WienerPath;
use crate::real::{mean, sample_std, Real};
use crate::scalar::{PowerNonlinearity, Regularization};
use crate::solver::{lyapunov_energy, Solver, SolverConfig, Trajectory};

/// Maps `f` over `items` on at most `threads` workers (0 = rayon default),
/// returning results in input order. The first error in input order wins.
pub fn par_map_ordered<I, R, F>(threads: usize, items: &[I], f: F) -> Result<Vec<R>>
where
    I: Sync,
    R: Send,
    F: Fn(&I) -> Result<R> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    let out: Vec<Result<R>> = pool.install(|| items.par_iter().map(&f).collect());
    out.into_iter().collect()
}

/// Brownian path for `seed` matching `cfg`'s step, horizon and mode count.
pub fn path_for<T: Real>(cfg: &SolverConfig<T>, seed: u64) -> Result<WienerPath> {
    WienerPath::sample(seed, cfg.dt.as_f64(), cfg.n_steps(), cfg.noise.modes())
}

/// Independent trajectories sharing one configuration and time grid.
#[derive(Debug, Clone)]
pub struct Ensemble<T: Real> {
    pub trajectories: Vec<Trajectory<T>>,
    pub config: SolverConfig<T>,
}

impl<T: Real> Ensemble<T> {
    pub fn new(trajectories: Vec<Trajectory<T>>, config: SolverConfig<T>) -> Result<Self> {
        if let Some(first) = trajectories.first() {
            for tr in &trajectories[1..] {
                if tr.times != first.times {
                    return Err(Error::Incompatible(
                        "trajectories use different time grids".into(),
                    ));
                }
            }
        }
        Ok(Self {
            trajectories,
            config,
        })
    }

    /// Simulates one trajectory per seed from the same initial datum.
    pub fn simulate(
        cfg: &SolverConfig<T>,
        x0: &GridFunction<T>,
        seeds: &[u64],
        threads: usize,
    ) -> Result<Self> {
        let solver = Solver::new(cfg.clone())?;
        let trajectories = par_map_ordered(threads, seeds, |&seed| {
            solver.simulate(x0, &path_for(cfg, seed)?)
        })?;
        Self::new(trajectories, cfg.clone())
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn times(&self) -> &[T] {
        self.trajectories
            .first()
            .map(|t| t.times.as_slice())
            .unwrap_or(&[])
    }

    pub fn seeds(&self) -> Vec<u64> {
        self.trajectories.iter().map(|t| t.path_seed).collect()
    }
}

fn to_f64<T: Real>(xs: &[T]) -> Vec<f64> {
    xs.iter().map(|x| x.as_f64()).collect()
}

/// Monte-Carlo energy statistics, one entry per recorded time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub times: Vec<f64>,
    /// `E int_0^t E(X_r) dr`.
    pub integrated_energy: Vec<f64>,
    /// `E t E(X_t) + E int_0^t r ||eta_r||^2_{H^-1} dr`.
    pub weighted: Vec<f64>,
    /// `E E(X_t) + E int_0^t ||eta_r||^2_{H^-1} dr`.
    pub unweighted: Vec<f64>,
    /// `E ||x0||^2_{H^-1} + 1`.
    pub initial_h_minus1_plus_one: f64,
    /// `E E(x0)`.
    pub initial_energy: f64,
    /// Largest `E(X_{k+1}) + dt_k ||eta_{k+1}||^2 - E(X_k)` over paths and steps;
    /// nonpositive (up to solver tolerance) for noise-free implicit runs.
    pub dissipation_defect: f64,
}

impl EnergyReport {
    pub fn sup_weighted(&self) -> f64 {
        self.weighted.iter().copied().fold(0.0, f64::max)
    }

    pub fn sup_unweighted(&self) -> f64 {
        self.unweighted.iter().copied().fold(0.0, f64::max)
    }
}

/// Energy statistics for the functional `E = eps/2 ||.||^2 + sum h psi_reg`.
///
/// Time integrals use the left-endpoint rule on the recorded grid.
pub fn energy_statistics<T: Real>(
    ens: &Ensemble<T>,
    nl: &PowerNonlinearity<T>,
    eps_visc: T,
    reg: &Regularization<T>,
) -> Result<EnergyReport> {
    if ens.is_empty() {
        return Err(Error::InvalidParameter("empty ensemble".into()));
    }
    if ens.trajectories.iter().any(|t| !t.has_eta()) {
        return Err(Error::MissingEta);
    }
    let times = ens.times().to_vec();
    let nt = times.len();
    let lap = DirichletLaplacian::new(*ens.trajectories[0].states[0].domain());
    let mut a = vec![Vec::with_capacity(ens.len()); nt];
    let mut b = vec![Vec::with_capacity(ens.len()); nt];
    let mut c = vec![Vec::with_capacity(ens.len()); nt];
    let mut h0 = Vec::with_capacity(ens.len());
    let mut e0 = Vec::with_capacity(ens.len());
    let mut defect = f64::NEG_INFINITY;
    for tr in &ens.trajectories {
        let energy: Vec<T> = tr
            .states
            .iter()
            .map(|x| lyapunov_energy(nl, eps_visc, reg, x))
            .collect();
        let q: Vec<T> = tr
            .eta
            .iter()
            .map(|e| lap.h_minus1_norm_sq(e))
            .collect::<Result<_>>()?;
        h0.push(lap.h_minus1_norm_sq(&tr.states[0])?);
        e0.push(energy[0]);
        let (mut int_e, mut int_rq, mut int_q) = (T::zero(), T::zero(), T::zero());
        for k in 0..nt {
            if k > 0 {
                let dt = times[k] - times[k - 1];
                int_e += dt * energy[k - 1];
                int_rq += dt * times[k - 1] * q[k - 1];
                int_q += dt * q[k - 1];
                defect = defect.max((energy[k] + dt * q[k] - energy[k - 1]).as_f64());
            }
            a[k].push(int_e);
            b[k].push(times[k] * energy[k] + int_rq);
            c[k].push(energy[k] + int_q);
        }
    }
    Ok(EnergyReport {
        times: to_f64(&times),
        integrated_energy: a.iter().map(|v| mean(v).as_f64()).collect(),
        weighted: b.iter().map(|v| mean(v).as_f64()).collect(),
        unweighted: c.iter().map(|v| mean(v).as_f64()).collect(),
        initial_h_minus1_plus_one: mean(&h0).as_f64() + 1.0,
        initial_energy: mean(&e0).as_f64(),
        dissipation_defect: if nt > 1 { defect } else { 0.0 },
    })
}

/// Least-squares fit of `log(error)` against `log(parameter)`.
///
/// A ladder of `L` levels yields `L - 1` consecutive differences, so the
/// 3-level minimum of a ladder corresponds to 2 fitted points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// `(parameter, error)` pairs.
    pub levels: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

impl RateFit {
    pub fn fit(levels: Vec<(f64, f64)>) -> Result<Self> {
        if levels.len() < 2 {
            return Err(Error::Degenerate(format!(
                "need at least 2 points, got {}",
                levels.len()
            )));
        }
        if levels
            .iter()
            .any(|&(p, e)| !(p > 0.0) || !(e > 0.0) || !e.is_finite())
        {
            return Err(Error::Degenerate(
                "parameters and errors must be positive".into(),
            ));
        }
        let xs: Vec<f64> = levels.iter().map(|l| l.0.ln()).collect();
        let ys: Vec<f64> = levels.iter().map(|l| l.1.ln()).collect();
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
        if sxx == 0.0 {
            return Err(Error::Degenerate("all parameters coincide".into()));
        }
        let slope = sxy / sxx;
        let intercept = my - slope * mx;
        let r2 = if syy == 0.0 {
            1.0
        } else {
            sxy * sxy / (sxx * syy)
        };
        Ok(Self {
            levels,
            slope,
            intercept,
            r2,
        })
    }
}

fn same_times<T: Real>(a: &[T], b: &[T]) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b)
            .all(|(x, y)| (*x - *y).abs() <= T::lit(1e-9) * (T::one() + x.abs()))
}

/// `sup_t ||X^{(i)}_t - X^{(i+1)}_t||^2_{H^-1}` for consecutive levels of one coupled ladder.
pub fn coupled_sup_differences<T: Real>(
    lap: &DirichletLaplacian<T>,
    ladder: &[Trajectory<T>],
) -> Result<Vec<T>> {
    ladder
        .windows(2)
        .map(|w| {
            if !same_times(&w[0].times, &w[1].times) {
                return Err(Error::Incompatible(
                    "ladder levels recorded on different time grids".into(),
                ));
            }
            if w[0].path_seed != w[1].path_seed {
                return Err(Error::PathMismatch(
                    "ladder levels driven by different paths".into(),
                ));
            }
            let mut sup = T::zero();
            for (a, b) in w[0].states.iter().zip(&w[1].states) {
                sup = sup.max(lap.h_minus1_norm_sq(&a.sub(b)?)?);
            }
            Ok(sup)
        })
        .collect()
}

/// Rate fit from per-path sup-differences (`sup_sq[path][level]`).
///
/// The error at `params[i]` is `sqrt(mean over paths of sup_sq[.][i])`.
pub fn rate_from_sup_differences<T: Real>(params: &[T], sup_sq: &[Vec<T>]) -> Result<RateFit> {
    if params.len() < 3 {
        return Err(Error::Degenerate(format!(
            "need at least 3 ladder levels, got {}",
            params.len()
        )));
    }
    let levels = params.len() - 1;
    if sup_sq.iter().any(|row| row.len() != levels) {
        return Err(Error::Incompatible(
            "every path needs one difference per ladder step".into(),
        ));
    }
    let pts = (0..levels)
        .map(|i| {
            let col: Vec<T> = sup_sq.iter().map(|row| row[i]).collect();
            (params[i].as_f64(), mean(&col).sqrt().as_f64())
        })
        .collect::<Vec<_>>();
    if pts.iter().all(|p| p.1 == 0.0) && !pts.is_empty() {
        return Err(Error::Degenerate("all coupled differences vanish".into()));
    }
    RateFit::fit(pts)
}

/// Stability rate over coupled ladders: `ladders[path][level]` are trajectories
/// driven by the same path at regularization `params[level]`.
pub fn stability_rate<T: Real>(
    lap: &DirichletLaplacian<T>,
    params: &[T],
    ladders: &[Vec<Trajectory<T>>],
) -> Result<RateFit> {
    if ladders.iter().any(|l| l.len() != params.len()) {
        return Err(Error::Incompatible(
            "each ladder needs one trajectory per parameter".into(),
        ));
    }
    let sup: Vec<Vec<T>> = ladders
        .iter()
        .map(|l| coupled_sup_differences(lap, l))
        .collect::<Result<_>>()?;
    rate_from_sup_differences(params, &sup)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub times: Vec<f64>,
    /// `E ||X_t - Y_t||^2_{H^-1}` per recorded time.
    pub mean_sq_distance: Vec<f64>,
    /// Monte-Carlo half-width `2 std / sqrt(M)` per recorded time.
    pub half_width: Vec<f64>,
    pub initial_sq_distance: f64,
    /// `sup_t E ||X_t - Y_t||^2 / E ||x0 - y0||^2`.
    pub sup_ratio: f64,
    pub k: f64,
    pub tol: f64,
    /// `sup_t e^{-Kt} E ||X_t - Y_t||^2`.
    pub weighted_sup: f64,
    /// `min_t [(1 + tol) E||x0 - y0||^2 - e^{-Kt} (E||X_t - Y_t||^2 - half_width_t)]`.
    pub margin: f64,
    /// Smallest `K >= 0` with `sup_t e^{-Kt} E||X_t - Y_t||^2 <= E||x0 - y0||^2`
    /// (`None` if no finite `K` works).
    pub minimal_k: Option<f64>,
    pub holds: bool,
}

/// Compares two ensembles driven by identical paths from different initial data.
pub fn contraction_check<T: Real>(
    lap: &DirichletLaplacian<T>,
    ens1: &Ensemble<T>,
    ens2: &Ensemble<T>,
    k: T,
    tol: T,
) -> Result<ContractionReport> {
    if ens1.seeds() != ens2.seeds() {
        return Err(Error::PathMismatch(
            "ensembles are not driven by the same paths".into(),
        ));
    }
    if ens1.times() != ens2.times() {
        return Err(Error::Incompatible(
            "ensembles recorded on different time grids".into(),
        ));
    }
    let distances: Vec<Vec<T>> = ens1
        .trajectories
        .iter()
        .zip(&ens2.trajectories)
        .map(|(a, b)| {
            a.states
                .iter()
                .zip(&b.states)
                .map(|(x, y)| lap.h_minus1_norm_sq(&x.sub(y)?))
                .collect::<Result<Vec<T>>>()
        })
        .collect::<Result<_>>()?;
    let times = ens1.times().to_vec();
    let m = T::from_usize(distances.len().max(1)).unwrap();
    let mut mean_d = Vec::with_capacity(times.len());
    let mut hw = Vec::with_capacity(times.len());
    for i in 0..times.len() {
        let col: Vec<T> = distances.iter().map(|row| row[i]).collect();
        mean_d.push(mean(&col));
        hw.push(T::lit(2.0) * sample_std(&col) / m.sqrt());
    }
    let d0 = mean_d[0];
    let mut weighted_sup = T::zero();
    let mut margin = T::infinity();
    for i in 0..times.len() {
        let weight = (-k * times[i]).exp();
        let w = weight * mean_d[i];
        weighted_sup = weighted_sup.max(w);
        margin = margin.min((T::one() + tol) * d0 - w + weight * hw[i]);
    }
    let sup = mean_d.iter().copied().fold(T::zero(), T::max);
    let minimal_k = if d0 > T::zero() {
        let mut kmin = 0.0f64;
        for i in 1..times.len() {
            if times[i] > T::zero() && mean_d[i] > d0 {
                kmin = kmin.max(((mean_d[i] / d0).ln() / times[i]).as_f64());
            }
        }
        Some(kmin)
    } else if sup == T::zero() {
        Some(0.0)
    } else {
        None
    };
    let ratio = if d0 > T::zero() {
        (sup / d0).as_f64()
    } else {
        0.0
    };
    Ok(ContractionReport {
        times: to_f64(&times),
        mean_sq_distance: to_f64(&mean_d),
        half_width: to_f64(&hw),
        initial_sq_distance: d0.as_f64(),
        sup_ratio: ratio,
        k: k.as_f64(),
        tol: tol.as_f64(),
        weighted_sup: weighted_sup.as_f64(),
        margin: margin.as_f64(),
        minimal_k,
        holds: weighted_sup <= (T::one() + tol) * d0,
    })
}

/// First recorded time per path with `||X_t||_{H^-1} < threshold`.
///
/// Descriptive only.
pub fn extinction_probe<T: Real>(
    lap: &DirichletLaplacian<T>,
    ens: &Ensemble<T>,
    threshold: T,
) -> Result<Vec<Option<f64>>> {
    ens.trajectories
        .iter()
        .map(|tr| {
            for (t, x) in tr.times.iter().zip(&tr.states) {
                if lap.h_minus1_norm(x)? < threshold {
                    return Ok(Some(t.as_f64()));
                }
            }
            Ok(None)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Domain1D;
    use crate::noise::NoiseModel;
    use approx::assert_abs_diff_eq;

    fn deterministic(
        m: f64,
        reg: Regularization<f64>,
        n: usize,
        dt: f64,
        t_end: f64,
    ) -> SolverConfig<f64> {
        SolverConfig::new(Domain1D::unit(n).unwrap(), m, reg, dt, t_end).unwrap()
    }

    #[test]
    fn ordered_parallel_map() {
        let items: Vec<u64> = (0..100).collect();
        let out = par_map_ordered(4, &items, |&i| Ok(i * i)).unwrap();
        assert_eq!(out, items.iter().map(|i| i * i).collect::<Vec<_>>());
        let err = par_map_ordered(3, &items, |&i| {
            if i % 7 == 3 {
                Err(Error::MissingEta)
            } else {
                Ok(i)
            }
        });
        assert!(err.is_err());
    }

    #[test]
    fn zero_trajectory_statistics_vanish() {
        let cfg = deterministic(0.0, Regularization::delta(0.1).unwrap(), 15, 1e-3, 1e-2);
        let ens = Ensemble::simulate(&cfg, &GridFunction::zeros(cfg.domain), &[1, 2], 1).unwrap();
        let rep = energy_statistics(&ens, &cfg.nl, cfg.eps_visc, &cfg.regularization).unwrap();
        assert!(rep
            .integrated_energy
            .iter()
            .chain(&rep.weighted)
            .chain(&rep.unweighted)
            .all(|&v| v == 0.0));
        assert_eq!(rep.initial_energy, 0.0);
        assert_eq!(rep.initial_h_minus1_plus_one, 1.0);
    }

    #[test]
    fn missing_eta_rejected() {
        let cfg = deterministic(1.0, Regularization::None, 7, 1e-2, 0.1);
        let mut ens = Ensemble::simulate(&cfg, &GridFunction::zeros(cfg.domain), &[0], 1).unwrap();
        ens.trajectories[0].eta.clear();
        assert_eq!(
            energy_statistics(&ens, &cfg.nl, 0.0, &Regularization::None),
            Err(Error::MissingEta)
        );
    }

    #[test]
    fn linear_energy_integral_matches_closed_form() {
        // on (0, pi) the first discrete eigenvalue is close to 1
        let d = Domain1D::new(0.0, std::f64::consts::PI, 63).unwrap();
        let dt = 1e-3;
        let t_end = 1.0;
        let cfg = SolverConfig::new(d, 1.0, Regularization::None, dt, t_end).unwrap();
        let lap = DirichletLaplacian::new(d);
        let lam = lap.eigenvalues()[0];
        let ens = Ensemble::simulate(&cfg, &lap.eigenvector(1), &[0], 1).unwrap();
        let rep = energy_statistics(&ens, &cfg.nl, 0.0, &Regularization::None).unwrap();
        let got = *rep.integrated_energy.last().unwrap();
        let exact = (1.0 - (-2.0 * lam * t_end).exp()) / (4.0 * lam);
        assert!((got - exact).abs() <= 2.0 * dt * exact, "{got} vs {exact}");
        // the discrete geometric sum is reproduced to rounding
        let q = 1.0 / (1.0 + dt * lam);
        let steps = cfg.n_steps() as i32;
        let geometric = 0.5 * dt * (1.0 - q.powi(2 * steps)) / (1.0 - q * q);
        assert_abs_diff_eq!(got, geometric, epsilon = 1e-12);
    }

    #[test]
    fn deterministic_implicit_dissipation_defect() {
        let d = Domain1D::unit(63).unwrap();
        let mut cfg =
            SolverConfig::new(d, 0.0, Regularization::delta(1e-2).unwrap(), 1e-3, 0.05).unwrap();
        cfg.eps_visc = 1e-3;
        let x0 = GridFunction::from_fn(d, |x| (2.0 * std::f64::consts::PI * x).sin());
        let ens = Ensemble::simulate(&cfg, &x0, &[0], 1).unwrap();
        let rep = energy_statistics(&ens, &cfg.nl, cfg.eps_visc, &cfg.regularization).unwrap();
        assert!(rep.dissipation_defect <= 1e-9, "{}", rep.dissipation_defect);
        // the weighted statistic grows like int E: its increments are bounded by dt E(x0)
        for w in rep.weighted.windows(2) {
            assert!(w[1] - w[0] <= 1e-3 * rep.initial_energy + 1e-9);
        }
    }

    #[test]
    fn weighted_energy_ratio_stable_under_delta_halving() {
        let d = Domain1D::unit(63).unwrap();
        let x0 = GridFunction::from_fn(d, |x: f64| (std::f64::consts::PI * x).sin());
        let noise =
            NoiseModel::linear_multiplicative(vec![GridFunction::from_fn(d, |_| 0.5)]).unwrap();
        let ratios: Vec<f64> = [0.1, 0.05]
            .iter()
            .map(|&delta| {
                let mut cfg =
                    SolverConfig::new(d, 0.0, Regularization::delta(delta).unwrap(), 1e-3, 0.1)
                        .unwrap();
                cfg.noise = noise.clone();
                let ens = Ensemble::simulate(&cfg, &x0, &[1, 2, 3, 4], 2).unwrap();
                let rep = energy_statistics(&ens, &cfg.nl, 0.0, &cfg.regularization).unwrap();
                rep.sup_weighted() / rep.initial_h_minus1_plus_one
            })
            .collect();
        assert!(
            ratios[0] / ratios[1] < 2.0 && ratios[1] / ratios[0] < 2.0,
            "{ratios:?}"
        );
    }

    #[test]
    fn rate_fit_recovers_power_law() {
        let fit = RateFit::fit(vec![(0.1, 0.2), (0.05, 0.1), (0.025, 0.05)]).unwrap();
        assert_abs_diff_eq!(fit.slope, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.r2, 1.0, epsilon = 1e-12);
        assert!(RateFit::fit(vec![(0.1, 1.0), (0.05, 0.5)]).is_ok());
        assert!(matches!(
            RateFit::fit(vec![(0.1, 1.0)]),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(
            rate_from_sup_differences(&[0.1, 0.05], &[vec![1.0]]),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(
            RateFit::fit(vec![(0.1, 0.0), (0.05, 0.0), (0.02, 0.0)]),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn identical_levels_are_degenerate() {
        let cfg = deterministic(0.0, Regularization::delta(0.1).unwrap(), 15, 1e-3, 1e-2);
        let lap = DirichletLaplacian::new(cfg.domain);
        let x0 = GridFunction::from_fn(cfg.domain, |x| x * (1.0 - x));
        let tr = Solver::new(cfg.clone())
            .unwrap()
            .simulate(&x0, &path_for(&cfg, 0).unwrap())
            .unwrap();
        let ladder = vec![vec![tr.clone(), tr.clone(), tr.clone(), tr]];
        let err = stability_rate(&lap, &[0.1, 0.05, 0.025, 0.0125], &ladder).unwrap_err();
        assert!(err.to_string().contains("degenerate") || matches!(err, Error::Degenerate(_)));
    }

    #[test]
    fn linear_case_delta_ladder_is_exact() {
        let d = Domain1D::unit(15).unwrap();
        let lap = DirichletLaplacian::new(d);
        let x0 = GridFunction::from_fn(d, |x| x * (1.0 - x));
        let params = [0.1, 0.05, 0.025, 0.0125];
        let cfgs: Vec<_> = params
            .iter()
            .map(|&p| {
                SolverConfig::new(d, 1.0, Regularization::delta(p).unwrap(), 1e-3, 1e-2).unwrap()
            })
            .collect();
        let path = path_for(&cfgs[0], 0).unwrap();
        let ladder = crate::solver::simulate_coupled(&cfgs, &x0, &path).unwrap();
        let diffs = coupled_sup_differences(&lap, &ladder).unwrap();
        assert!(diffs.iter().all(|&v| v < 1e-24), "{diffs:?}");
    }

    #[test]
    fn deterministic_ladder_errors_shrink() {
        let d = Domain1D::unit(31).unwrap();
        let lap = DirichletLaplacian::new(d);
        let x0 = GridFunction::from_fn(d, |x: f64| (std::f64::consts::PI * x).sin());
        let params = [0.1, 0.05, 0.025, 0.0125];
        let cfgs: Vec<_> = params
            .iter()
            .map(|&p| {
                SolverConfig::new(d, 0.0, Regularization::delta(p).unwrap(), 1e-3, 0.05).unwrap()
            })
            .collect();
        let path = path_for(&cfgs[0], 0).unwrap();
        let ladder = crate::solver::simulate_coupled(&cfgs, &x0, &path).unwrap();
        let diffs = coupled_sup_differences(&lap, &ladder).unwrap();
        for w in diffs.windows(2) {
            assert!(w[1] <= w[0], "{diffs:?}");
        }
    }

    #[test]
    fn contraction_examples() {
        let cfg = deterministic(1.0, Regularization::None, 31, 1e-3, 0.1);
        let lap = DirichletLaplacian::new(cfg.domain);
        let x0 = GridFunction::from_fn(cfg.domain, |x| x * (1.0 - x));
        let y0 = GridFunction::from_fn(cfg.domain, |x| (3.0 * x).sin() * x * (1.0 - x));
        let a = Ensemble::simulate(&cfg, &x0, &[0, 1], 1).unwrap();
        let same = contraction_check(&lap, &a, &a, 0.0, 0.0).unwrap();
        assert_eq!(
            same.mean_sq_distance.iter().copied().fold(0.0, f64::max),
            0.0
        );
        let b = Ensemble::simulate(&cfg, &y0, &[0, 1], 1).unwrap();
        let rep = contraction_check(&lap, &a, &b, 0.0, 0.0).unwrap();
        assert!(rep.holds);
        assert_eq!(rep.minimal_k, Some(0.0));
        assert_abs_diff_eq!(rep.sup_ratio, 1.0, epsilon = 1e-12);
        let c = Ensemble::simulate(&cfg, &y0, &[5, 6], 1).unwrap();
        assert!(matches!(
            contraction_check(&lap, &a, &c, 0.0, 0.0),
            Err(Error::PathMismatch(_))
        ));
    }

    #[test]
    fn multiplicative_noise_contraction_constant() {
        let d = Domain1D::unit(31).unwrap();
        let lap = DirichletLaplacian::new(d);
        let mut cfg = SolverConfig::new(d, 1.0, Regularization::None, 1e-3, 0.1).unwrap();
        cfg.noise =
            NoiseModel::linear_multiplicative(vec![GridFunction::from_fn(d, |_| 1.0)]).unwrap();
        let x0 = GridFunction::from_fn(d, |x: f64| (std::f64::consts::PI * x).sin());
        let y0 = x0.scale(0.5);
        let seeds: Vec<u64> = (0..32).collect();
        let a = Ensemble::simulate(&cfg, &x0, &seeds, 2).unwrap();
        let b = Ensemble::simulate(&cfg, &y0, &seeds, 2).unwrap();
        let rep = contraction_check(&lap, &a, &b, 1.0, 0.0).unwrap();
        let kmin = rep.minimal_k.unwrap();
        // Ito correction for g = 1 is exactly one unit of the distance; dissipation only helps
        let rel_hw = rep.half_width.iter().copied().fold(0.0, f64::max) / rep.initial_sq_distance;
        assert!(kmin <= 1.0 + 10.0 * rel_hw, "kmin={kmin}");
    }

    #[test]
    fn extinction_examples() {
        let cfg = deterministic(1.0, Regularization::None, 15, 1e-2, 0.5);
        let lap = DirichletLaplacian::new(cfg.domain);
        let zero = Ensemble::simulate(&cfg, &GridFunction::zeros(cfg.domain), &[0], 1).unwrap();
        assert_eq!(
            extinction_probe(&lap, &zero, 1e-12).unwrap(),
            vec![Some(0.0)]
        );
        let e1 = lap.eigenvector(1);
        let ens = Ensemble::simulate(&cfg, &e1, &[0], 1).unwrap();
        let envelope =
            lap.h_minus1_norm(&e1).unwrap() * (1.0 + 1e-2 * lap.eigenvalues()[0]).powi(-50);
        assert_eq!(
            extinction_probe(&lap, &ens, 0.9 * envelope).unwrap(),
            vec![None]
        );
    }

    #[test]
    fn sign_diffusion_extinction_earlier_for_smaller_data() {
        let d = Domain1D::unit(31).unwrap();
        let lap = DirichletLaplacian::new(d);
        let cfg =
            SolverConfig::new(d, 0.0, Regularization::delta(1e-4).unwrap(), 1e-3, 0.2).unwrap();
        let base = GridFunction::from_fn(d, |x: f64| (std::f64::consts::PI * x).sin());
        let times: Vec<f64> = [0.2, 0.1, 0.05]
            .iter()
            .map(|&a| {
                let ens = Ensemble::simulate(&cfg, &base.scale(a), &[0], 1).unwrap();
                extinction_probe(&lap, &ens, 1e-3).unwrap()[0].unwrap_or(f64::INFINITY)
            })
            .collect();
        assert!(times[1] < times[0] && times[2] < times[1], "{times:?}");
    }
}
