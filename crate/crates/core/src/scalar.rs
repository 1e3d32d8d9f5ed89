//! Pointwise calculus of the power potential `psi(r) = |r|^(m+1)/(m+1)` and
//! its two regularizations: the Moreau-Yosida envelope and the
//! `delta`-smoothing `((r^2 + delta)^((m+1)/2) - delta^((m+1)/2))/(m+1)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

/// Closed interval `[lo, hi]`, used for values of the multivalued `phi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval<T> {
    pub lo: T,
    pub hi: T,
}

impl<T: Real> Interval<T> {
    pub fn point(x: T) -> Self {
        Self { lo: x, hi: x }
    }

    pub fn is_singleton(&self) -> bool {
        self.lo == self.hi
    }

    pub fn contains(&self, x: T, tol: T) -> bool {
        x >= self.lo - tol && x <= self.hi + tol
    }

    /// Distance from `x` to the interval (zero inside).
    pub fn distance(&self, x: T) -> T {
        if x < self.lo {
            self.lo - x
        } else if x > self.hi {
            x - self.hi
        } else {
            T::zero()
        }
    }

    /// Smallest absolute value attained in the interval.
    pub fn min_abs(&self) -> T {
        if self.lo <= T::zero() && self.hi >= T::zero() {
            T::zero()
        } else {
            self.lo.abs().min(self.hi.abs())
        }
    }
}

/// The exponent `m in [0, 1]` of `phi(r) = |r|^m Sgn(r)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerNonlinearity<T> {
    m: T,
}

impl<T: Real> PowerNonlinearity<T> {
    pub fn new(m: T) -> Result<Self> {
        if !(m >= T::zero() && m <= T::one()) {
            return Err(Error::OutOfRange {
                what: "exponent m must lie in [0, 1]",
                value: m.as_f64(),
            });
        }
        Ok(Self { m })
    }

    pub fn m(&self) -> T {
        self.m
    }

    pub fn psi(&self, r: T) -> T {
        let p = self.m + T::one();
        r.abs().powf(p) / p
    }

    /// `phi(r) = d psi(r)`; the full interval `[-1, 1]` at `r = 0` when `m = 0`.
    pub fn phi_set(&self, r: T) -> Interval<T> {
        if self.m == T::zero() {
            if r > T::zero() {
                Interval::point(T::one())
            } else if r < T::zero() {
                Interval::point(-T::one())
            } else {
                Interval {
                    lo: -T::one(),
                    hi: T::one(),
                }
            }
        } else {
            Interval::point(self.phi_single(r))
        }
    }

    /// Minimal section: the element of `phi(r)` closest to zero.
    pub fn phi_min_section(&self, r: T) -> T {
        let set = self.phi_set(r);
        if set.lo <= T::zero() && set.hi >= T::zero() {
            T::zero()
        } else if set.lo > T::zero() {
            set.lo
        } else {
            set.hi
        }
    }

    /// Minimal section norm `inf { |eta| : eta in phi(r) }`.
    pub fn phi_min_norm(&self, r: T) -> T {
        self.phi_set(r).min_abs()
    }

    /// Single-valued branch `|r|^m sgn(r)` (0 at the origin).
    fn phi_single(&self, r: T) -> T {
        if r == T::zero() {
            T::zero()
        } else {
            r.abs().powf(self.m) * r.signum()
        }
    }

    /// Residual `s + eps phi(s) - r` of the resolvent equation (single-valued branch).
    fn resolvent_residual(&self, eps: T, r: T, s: T) -> T {
        s + eps * self.phi_single(s) - r
    }
}

/// Moreau-Yosida parameter `eps > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YosidaRegularization<T> {
    eps: T,
}

const MAX_BISECTION: usize = 200;

impl<T: Real> YosidaRegularization<T> {
    pub fn new(eps: T) -> Result<Self> {
        if !(eps > T::zero()) || !eps.is_finite() {
            return Err(Error::OutOfRange {
                what: "Yosida parameter must be positive",
                value: eps.as_f64(),
            });
        }
        Ok(Self { eps })
    }

    pub fn eps(&self) -> T {
        self.eps
    }

    /// The resolvent `J(r) = (I + eps phi)^{-1}(r)`.
    pub fn resolvent(&self, nl: &PowerNonlinearity<T>, r: T) -> T {
        let eps = self.eps;
        let m = nl.m();
        if m == T::zero() {
            return r.signum() * (r.abs() - eps).max(T::zero());
        }
        if m == T::one() {
            return r / (T::one() + eps);
        }
        if r == T::zero() {
            return T::zero();
        }
        let tol = T::lit(1e-13).max(T::lit(4.0) * T::epsilon()) * (T::one() + r.abs());
        let (mut lo, mut hi) = (r.min(T::zero()), r.max(T::zero()));
        let mut s = T::lit(0.5) * (lo + hi);
        for _ in 0..MAX_BISECTION {
            s = T::lit(0.5) * (lo + hi);
            let f = nl.resolvent_residual(eps, r, s);
            if f.abs() <= tol || s == lo || s == hi {
                break;
            }
            if f > T::zero() {
                hi = s;
            } else {
                lo = s;
            }
        }
        // Newton polish
        if s != T::zero() {
            let f = nl.resolvent_residual(eps, r, s);
            let df = T::one() + eps * m * s.abs().powf(m - T::one());
            let cand = s - f / df;
            if cand.signum() == r.signum() && nl.resolvent_residual(eps, r, cand).abs() < f.abs() {
                s = cand;
            }
        }
        s
    }

    /// Yosida approximation `(r - J r)/eps`.
    pub fn phi(&self, nl: &PowerNonlinearity<T>, r: T) -> T {
        (r - self.resolvent(nl, r)) / self.eps
    }

    /// Derivative of the Yosida approximation, `phi'(s)/(1 + eps phi'(s))` at `s = J r`.
    pub fn dphi(&self, nl: &PowerNonlinearity<T>, r: T) -> T {
        let m = nl.m();
        let s = self.resolvent(nl, r);
        if m == T::one() {
            return T::one() / (T::one() + self.eps);
        }
        if s == T::zero() {
            return T::one() / self.eps;
        }
        if m == T::zero() {
            return T::zero();
        }
        let d = m * s.abs().powf(m - T::one());
        d / (T::one() + self.eps * d)
    }

    /// Moreau envelope `inf_s |r-s|^2/(2 eps) + psi(s)`, evaluated at its minimizer.
    pub fn psi(&self, nl: &PowerNonlinearity<T>, r: T) -> T {
        let s = self.resolvent(nl, r);
        let y = (r - s) / self.eps;
        T::lit(0.5) * self.eps * y * y + nl.psi(s)
    }
}

/// Smoothing parameter `delta in (0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaSmoothing<T> {
    delta: T,
}

impl<T: Real> DeltaSmoothing<T> {
    pub fn new(delta: T) -> Result<Self> {
        if !(delta > T::zero() && delta <= T::one()) {
            return Err(Error::OutOfRange {
                what: "smoothing parameter must lie in (0, 1]",
                value: delta.as_f64(),
            });
        }
        Ok(Self { delta })
    }

    pub fn delta(&self) -> T {
        self.delta
    }

    pub fn psi(&self, nl: &PowerNonlinearity<T>, r: T) -> T {
        let p = (nl.m() + T::one()) / T::lit(2.0);
        ((r * r + self.delta).powf(p) - self.delta.powf(p)) / (nl.m() + T::one())
    }

    pub fn phi(&self, nl: &PowerNonlinearity<T>, r: T) -> T {
        (r * r + self.delta).powf((nl.m() - T::one()) / T::lit(2.0)) * r
    }

    pub fn dphi(&self, nl: &PowerNonlinearity<T>, r: T) -> T {
        let m = nl.m();
        (r * r + self.delta).powf((m - T::lit(3.0)) / T::lit(2.0)) * (self.delta + m * r * r)
    }

    /// Uniform bound `(2/(m+1)) delta^((m+1)/2)` on `|psi_delta - psi|`.
    pub fn psi_error_bound(&self, nl: &PowerNonlinearity<T>) -> T {
        let p = nl.m() + T::one();
        T::lit(2.0) / p * self.delta.powf(p / T::lit(2.0))
    }
}

/// Which single-valued approximation of `phi` drives the dynamics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regularization<T> {
    Yosida(YosidaRegularization<T>),
    Delta(DeltaSmoothing<T>),
    /// Only admissible for `m = 1`, where `phi` is the identity.
    None,
}

impl<T: Real> Regularization<T> {
    pub fn yosida(eps: T) -> Result<Self> {
        YosidaRegularization::new(eps).map(Self::Yosida)
    }

    pub fn delta(delta: T) -> Result<Self> {
        DeltaSmoothing::new(delta).map(Self::Delta)
    }

    /// Scalar size of the regularization (`eps`, `delta`, or 0).
    pub fn parameter(&self) -> T {
        match self {
            Self::Yosida(y) => y.eps(),
            Self::Delta(d) => d.delta(),
            Self::None => T::zero(),
        }
    }

    pub fn check_admissible(&self, nl: &PowerNonlinearity<T>) -> Result<()> {
        if matches!(self, Self::None) && nl.m() != T::one() {
            return Err(Error::InvalidParameter(
                "an unregularized nonlinearity is only allowed for m = 1".into(),
            ));
        }
        Ok(())
    }

    pub fn psi(&self, nl: &PowerNonlinearity<T>, r: T) -> T {
        match self {
            Self::Yosida(y) => y.psi(nl, r),
            Self::Delta(d) => d.psi(nl, r),
            Self::None => nl.psi(r),
        }
    }

    pub fn phi(&self, nl: &PowerNonlinearity<T>, r: T) -> T {
        match self {
            Self::Yosida(y) => y.phi(nl, r),
            Self::Delta(d) => d.phi(nl, r),
            Self::None => nl.phi_single(r),
        }
    }

    pub fn dphi(&self, nl: &PowerNonlinearity<T>, r: T) -> T {
        match self {
            Self::Yosida(y) => y.dphi(nl, r),
            Self::Delta(d) => d.dphi(nl, r),
            Self::None => {
                if nl.m() == T::one() {
                    T::one()
                } else {
                    nl.m() * r.abs().powf(nl.m() - T::one())
                }
            }
        }
    }

    /// Global Lipschitz constant of the regularized `phi`.
    pub fn lipschitz(&self, nl: &PowerNonlinearity<T>) -> T {
        match self {
            Self::Yosida(y) => T::one() / y.eps(),
            Self::Delta(d) => d.delta().powf((nl.m() - T::one()) / T::lit(2.0)),
            Self::None => T::one(),
        }
    }
}

/// Outcome of one family of inequalities over a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityCheck {
    pub name: String,
    pub evaluations: usize,
    pub violations: usize,
    /// Smallest `rhs - lhs` seen (negative means violated beyond rounding).
    pub worst_margin: f64,
    /// Arguments at which the worst margin occurred.
    pub worst_point: Vec<f64>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub m: f64,
    pub eps_y: Option<f64>,
    pub delta: Option<f64>,
    pub checks: Vec<InequalityCheck>,
    pub passed: bool,
}

impl CertificateReport {
    pub fn violations(&self) -> usize {
        self.checks.iter().map(|c| c.violations).sum()
    }
}

struct Tally<T> {
    name: &'static str,
    evaluations: usize,
    violations: usize,
    worst: T,
    worst_point: Vec<f64>,
}

impl<T: Real> Tally<T> {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            evaluations: 0,
            violations: 0,
            worst: T::infinity(),
            worst_point: Vec::new(),
        }
    }

    /// Records `margin >= -tol * (1 + scale)`.
    fn record(&mut self, margin: T, scale: T, point: &[T]) {
        self.evaluations += 1;
        let tol = T::lit(256.0) * T::epsilon() * (T::one() + scale.abs());
        if margin < -tol || margin.is_nan() {
            self.violations += 1;
        }
        if margin < self.worst || margin.is_nan() {
            self.worst = margin;
            self.worst_point = point.iter().map(|x| x.as_f64()).collect();
        }
    }

    fn finish(self) -> InequalityCheck {
        InequalityCheck {
            name: self.name.to_string(),
            evaluations: self.evaluations,
            violations: self.violations,
            worst_margin: self.worst.as_f64(),
            worst_point: self.worst_point,
            passed: self.violations == 0,
        }
    }
}

/// Constant in `(phi_e1(a) - phi_e2(b))(a - b) >= -C (e1 + e2)(1 + a^2 + b^2)`.
///
/// The pairing is bounded below by `-(e1 + e2)/2 (|phi(a)|^2 + |phi(b)|^2)` and
/// `|phi(a)|^2 = |a|^(2m) <= 1 + a^2`, so `C = 1/2`.
pub const MONOTONE_DEFECT_CONSTANT: f64 = 0.5;

/// Checks the Moreau-Yosida and `delta`-smoothing inequalities pointwise.
///
/// `pair_grid` supplies the `(a, b)` pairs (its Cartesian square) for the
/// perturbed monotonicity inequality; when absent `r_grid` is used.
pub fn verify_scalar_inequalities<T: Real>(
    nl: &PowerNonlinearity<T>,
    yosida: Option<YosidaRegularization<T>>,
    smoothing: Option<DeltaSmoothing<T>>,
    r_grid: &[T],
    pair_grid: Option<&[T]>,
) -> Result<CertificateReport> {
    if r_grid.is_empty() {
        return Err(Error::InvalidParameter("r_grid must be nonempty".into()));
    }
    if r_grid.iter().any(|r| !r.is_finite()) {
        return Err(Error::InvalidParameter("r_grid must be finite".into()));
    }
    let mut checks = Vec::new();

    if let Some(y) = yosida {
        let mut sandwich = Tally::new("sandwich psi(J r) <= psi_eps(r) <= psi(r)");
        let mut envelope = Tally::new("envelope |psi - psi_eps| <= eps |phi|^2");
        for &r in r_grid {
            let env = y.psi(nl, r);
            let lower = nl.psi(y.resolvent(nl, r));
            let upper = nl.psi(r);
            sandwich.record((env - lower).min(upper - env), upper, &[r]);
            let phi0 = nl.phi_min_norm(r);
            envelope.record(y.eps() * phi0 * phi0 - (upper - env).abs(), upper, &[r]);
        }
        checks.push(sandwich.finish());
        checks.push(envelope.finish());

        let pairs = pair_grid.unwrap_or(r_grid);
        let c = T::lit(MONOTONE_DEFECT_CONSTANT);
        let mut mono = Tally::new("perturbed monotonicity of phi_eps");
        for (e1, e2) in [(y.eps(), y.eps()), (y.eps(), y.eps() / T::lit(2.0))] {
            let y1 = YosidaRegularization { eps: e1 };
            let y2 = YosidaRegularization { eps: e2 };
            let p1: Vec<T> = pairs.iter().map(|&a| y1.phi(nl, a)).collect();
            let p2: Vec<T> = pairs.iter().map(|&b| y2.phi(nl, b)).collect();
            for (i, &a) in pairs.iter().enumerate() {
                for (j, &b) in pairs.iter().enumerate() {
                    let lhs = (p1[i] - p2[j]) * (a - b);
                    let bound = -c * (e1 + e2) * (T::one() + a * a + b * b);
                    mono.record(lhs - bound, a * a + b * b, &[a, b, e1, e2]);
                }
            }
        }
        checks.push(mono.finish());
    }

    if let Some(d) = smoothing {
        let p = nl.m() + T::one();
        let mut coercive = Tally::new("phi_delta(r) r >= (m+1) psi_delta(r) - 1");
        let mut growth = Tally::new("dphi_delta(r) r^2 <= (m+1)^2 psi_delta(r)");
        // The bound before `(r^2 + delta)^((m+1)/2)` is rewritten through psi_delta.
        let mut growth_shifted = Tally::new("dphi_delta(r) r^2 <= (m+1) (r^2 + delta)^((m+1)/2)");
        let shift = d.delta().powf(p / T::lit(2.0));
        let mut convergence = Tally::new("|psi_delta - psi| <= 2/(m+1) delta^((m+1)/2)");
        let bound = d.psi_error_bound(nl);
        for &r in r_grid {
            let pd = d.psi(nl, r);
            coercive.record(d.phi(nl, r) * r - (p * pd - T::one()), p * pd, &[r]);
            growth.record(p * p * pd - d.dphi(nl, r) * r * r, p * p * pd, &[r]);
            let shifted = p * (p * pd + shift);
            growth_shifted.record(shifted - d.dphi(nl, r) * r * r, shifted, &[r]);
            convergence.record(bound - (pd - nl.psi(r)).abs(), nl.psi(r), &[r]);
        }
        checks.push(coercive.finish());
        checks.push(growth.finish());
        checks.push(growth_shifted.finish());
        checks.push(convergence.finish());
    }

    let passed = checks.iter().all(|c| c.passed);
    Ok(CertificateReport {
        m: nl.m().as_f64(),
        eps_y: yosida.map(|y| y.eps().as_f64()),
        delta: smoothing.map(|d| d.delta().as_f64()),
        checks,
        passed,
    })
}

/// Closed-form Moreau envelope of `|r|`, used to cross-check `m = 0`.
pub fn huber<T: Real>(eps: T, r: T) -> T {
    if r.abs() <= eps {
        r * r / (T::lit(2.0) * eps)
    } else {
        r.abs() - eps / T::lit(2.0)
    }
}
