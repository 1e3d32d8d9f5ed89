//! Randomized certificates for the discrete Laplacian: eigen-identity,
//! resolvent contractions, `H^{-1}`/`H^1_0` duality, the inverse identity, and
//! the subgradient inequality for `-Delta w` with `w in phi(u)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::Result;
use crate::grid::{DirichletLaplacian, GridFunction};
use crate::real::Real;
use crate::scalar::{CertificateReport, InequalityCheck, PowerNonlinearity};

/// Relative tolerance of the eigen-identity.
pub const EIGEN_TOL: f64 = 1e-10;
/// Relative tolerance of the duality and inverse identities.
pub const IDENTITY_TOL: f64 = 1e-9;
/// Subgradient margins below `-SUBGRADIENT_TOL` count as violations.
pub const SUBGRADIENT_TOL: f64 = 1e-9;

struct Check {
    name: String,
    evaluations: usize,
    violations: usize,
    worst: f64,
    point: Vec<f64>,
}

impl Check {
    fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            evaluations: 0,
            violations: 0,
            worst: f64::INFINITY,
            point: Vec::new(),
        }
    }

    /// Records `margin`; negative margins are violations.
    fn record(&mut self, margin: f64, point: &[f64]) {
        self.evaluations += 1;
        if !(margin >= 0.0) {
            self.violations += 1;
        }
        if !(margin >= self.worst) {
            self.worst = margin;
            self.point = point.to_vec();
        }
    }

    fn finish(self) -> InequalityCheck {
        InequalityCheck {
            name: self.name,
            evaluations: self.evaluations,
            violations: self.violations,
            worst_margin: if self.evaluations == 0 {
                0.0
            } else {
                self.worst
            },
            worst_point: self.point,
            passed: self.violations == 0,
        }
    }
}

fn random_function<T: Real>(
    lap: &DirichletLaplacian<T>,
    rng: &mut ChaCha20Rng,
    amp: f64,
) -> GridFunction<T> {
    let d = *lap.domain();
    let values = (0..d.n())
        .map(|_| T::lit(rng.random_range(-amp..amp)))
        .collect();
    GridFunction::new(d, values).expect("finite samples")
}

/// Operator identities and resolvent contractions on `lap`'s grid.
///
/// Resolvents `(I - lambda Delta_h)^{-1}` are tested for every `lambda` on
/// `samples` random inputs; the `L^{m+1}` contraction is checked through
/// `varphi_energy` for each exponent in `m_values`.
pub fn operator_certificate<T: Real>(
    lap: &DirichletLaplacian<T>,
    m_values: &[T],
    lambdas: &[T],
    samples: usize,
    seed: u64,
) -> Result<CertificateReport> {
    let n = lap.domain().n();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let round = |x: T| T::lit(64.0) * T::epsilon() * (T::one() + x.abs());

    let mut eigen = Check::new(format!("eigen identity (n={n})"));
    for k in 1..=n {
        let e = lap.eigenvector(k);
        let lam = lap.eigenvalues()[k - 1];
        let err = lap.apply(&e)?.add(&e.scale(lam))?.sup_norm();
        let scale = lam * e.sup_norm();
        eigen.record((T::lit(EIGEN_TOL) * scale - err).as_f64(), &[k as f64]);
    }

    let mut h_minus1 = Check::new(format!("resolvent contraction in H^-1 (n={n})"));
    let mut l1 = Check::new(format!("resolvent contraction in L^1 (n={n})"));
    let mut energy: Vec<Check> = m_values
        .iter()
        .map(|m| {
            Check::new(format!(
                "resolvent contraction in L^{} (n={n})",
                m.as_f64() + 1.0
            ))
        })
        .collect();
    let nls: Vec<PowerNonlinearity<T>> = m_values
        .iter()
        .map(|&m| PowerNonlinearity::new(m))
        .collect::<Result<_>>()?;
    let mut duality = Check::new(format!("duality ||-Delta w||_H^-1 = ||w||_H1 (n={n})"));
    let mut inverse = Check::new(format!("inverse identity (n={n})"));
    for s in 0..samples {
        let u = random_function(lap, &mut rng, 2.0);
        for &lambda in lambdas {
            let j = lap.solve_resolvent(lambda, &u)?;
            let pt = [s as f64, lambda.as_f64()];
            let (a, b) = (lap.h_minus1_norm(&u)?, lap.h_minus1_norm(&j)?);
            h_minus1.record((a - b + round(a)).as_f64(), &pt);
            let (a, b) = (u.lp_norm(T::one())?, j.lp_norm(T::one())?);
            l1.record((a - b + round(a)).as_f64(), &pt);
            for (check, nl) in energy.iter_mut().zip(&nls) {
                let (a, b) = (u.varphi_energy(nl), j.varphi_energy(nl));
                check.record((a - b + round(a)).as_f64(), &pt);
            }
        }
        let w = random_function(lap, &mut rng, 2.0);
        let h1 = w.h1_norm();
        let dual = lap.h_minus1_norm(&lap.apply(&w)?.scale(-T::one()))?;
        duality.record(
            (T::lit(IDENTITY_TOL) * h1 - (dual - h1).abs()).as_f64(),
            &[s as f64],
        );
        let back = lap.inv_neg_laplacian(&lap.apply(&u)?)?;
        let err = back.add(&u)?.l2_norm();
        inverse.record(
            (T::lit(IDENTITY_TOL) * u.l2_norm() - err).as_f64(),
            &[s as f64],
        );
    }

    let mut checks = vec![eigen.finish(), h_minus1.finish(), l1.finish()];
    checks.extend(energy.into_iter().map(Check::finish));
    checks.push(duality.finish());
    checks.push(inverse.finish());
    let passed = checks.iter().all(|c| c.passed);
    Ok(CertificateReport {
        m: f64::NAN,
        eps_y: None,
        delta: None,
        checks,
        passed,
    })
}

/// Subgradient inequality over `trials` random triples `(u, w, y)` with
/// `w = phi(u)` (minimal-norm selection). For `m = 0` the samples of `u`
/// avoid zero so that the selection is single-valued.
pub fn subgradient_suite<T: Real>(
    lap: &DirichletLaplacian<T>,
    nl: &PowerNonlinearity<T>,
    trials: usize,
    seed: u64,
) -> Result<CertificateReport> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let d = *lap.domain();
    let mut check = Check::new(format!(
        "subgradient inequality (m={}, n={})",
        nl.m(),
        d.n()
    ));
    for trial in 0..trials {
        let u = if nl.m() == T::zero() {
            let values = (0..d.n())
                .map(|_| {
                    let mag = rng.random_range(0.05..2.0);
                    T::lit(if rng.random_bool(0.5) { mag } else { -mag })
                })
                .collect();
            GridFunction::new(d, values)?
        } else {
            random_function(lap, &mut rng, 2.0)
        };
        let w = u.map(|v| nl.phi_min_section(v));
        let y = random_function(lap, &mut rng, 2.0);
        let rep = lap.subgradient_check(nl, &u, &w, std::slice::from_ref(&y))?;
        let margin = rep.checks[0].worst_margin;
        check.record(margin + SUBGRADIENT_TOL, &[trial as f64]);
    }
    let check = check.finish();
    Ok(CertificateReport {
        m: nl.m().as_f64(),
        eps_y: None,
        delta: None,
        passed: check.passed,
        checks: vec![check],
    })
}
