//! Uniform Dirichlet grid on an interval, grid functions, the three-point
//! Laplacian with its resolvents and sine eigenbasis, and the discrete
//! `H^{-1}`, `H^1_0` and `L^p` norms.
//!
//! Grid functions hold values on the `n` interior nodes only; boundary values
//! are identically zero. The `L^2_h` pairing weights every node by `h`, which
//! makes the discrete sine modes exactly orthonormal.

use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::real::{pairwise_sum, Real};
use crate::scalar::{CertificateReport, InequalityCheck, PowerNonlinearity};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain1D<T> {
    a: T,
    b: T,
    n: usize,
}

impl<T: Real> Domain1D<T> {
    pub fn new(a: T, b: T, n: usize) -> Result<Self> {
        if !(b > a) || !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "interval ({a}, {b}) is empty"
            )));
        }
        if n == 0 {
            return Err(Error::InvalidParameter(
                "need at least one interior node".into(),
            ));
        }
        Ok(Self { a, b, n })
    }

    /// The unit interval with `n` interior nodes.
    pub fn unit(n: usize) -> Result<Self> {
        Self::new(T::zero(), T::one(), n)
    }

    pub fn a(&self) -> T {
        self.a
    }

    pub fn b(&self) -> T {
        self.b
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> T {
        self.b - self.a
    }

    pub fn h(&self) -> T {
        self.length() / T::from_usize(self.n + 1).unwrap()
    }

    /// Coordinate of interior node `j` (0-based, so node `j` sits at `a + (j+1) h`).
    pub fn node(&self, j: usize) -> T {
        self.a + T::from_usize(j + 1).unwrap() * self.h()
    }

    pub fn nodes(&self) -> impl Iterator<Item = T> + '_ {
        (0..self.n).map(move |j| self.node(j))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction<T> {
    domain: Domain1D<T>,
    values: Vec<T>,
}

impl<T: Real> GridFunction<T> {
    pub fn new(domain: Domain1D<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != domain.n() {
            return Err(Error::InvalidParameter(format!(
                "expected {} nodal values, got {}",
                domain.n(),
                values.len()
            )));
        }
        if let Some(j) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Precondition {
                node: j,
                detail: "non-finite value".into(),
            });
        }
        Ok(Self { domain, values })
    }

    pub fn zeros(domain: Domain1D<T>) -> Self {
        Self {
            domain,
            values: vec![T::zero(); domain.n()],
        }
    }

    pub fn from_fn(domain: Domain1D<T>, f: impl Fn(T) -> T) -> Self {
        Self {
            domain,
            values: domain.nodes().map(f).collect(),
        }
    }

    /// Wraps values without the finiteness check; for internal hot loops.
    pub(crate) fn from_raw(domain: Domain1D<T>, values: Vec<T>) -> Self {
        debug_assert_eq!(values.len(), domain.n());
        Self { domain, values }
    }

    pub fn domain(&self) -> &Domain1D<T> {
        &self.domain
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn same_domain(&self, other: &Self) -> Result<()> {
        if self.domain == other.domain {
            Ok(())
        } else {
            Err(Error::DomainMismatch)
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self::from_raw(self.domain, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.same_domain(other)?;
        Ok(Self::from_raw(
            self.domain,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, c: T) -> Self {
        self.map(|v| c * v)
    }

    /// `self += c * other`.
    pub fn axpy(&mut self, c: T, other: &Self) -> Result<()> {
        self.same_domain(other)?;
        for (s, &o) in self.values.iter_mut().zip(&other.values) {
            *s += c * o;
        }
        Ok(())
    }

    /// `L^2_h` inner product `h sum u_j v_j`.
    pub fn l2_inner(&self, other: &Self) -> Result<T> {
        self.same_domain(other)?;
        let prods: Vec<T> = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| a * b)
            .collect();
        Ok(self.domain.h() * pairwise_sum(&prods))
    }

    pub fn l2_norm_sq(&self) -> T {
        let sq: Vec<T> = self.values.iter().map(|&a| a * a).collect();
        self.domain.h() * pairwise_sum(&sq)
    }

    pub fn l2_norm(&self) -> T {
        self.l2_norm_sq().sqrt()
    }

    /// `(h sum |u_j|^p)^(1/p)` for `p >= 1`.
    pub fn lp_norm(&self, p: T) -> Result<T> {
        if !(p >= T::one()) {
            return Err(Error::OutOfRange {
                what: "L^p exponent must be >= 1",
                value: p.as_f64(),
            });
        }
        let terms: Vec<T> = self.values.iter().map(|v| v.abs().powf(p)).collect();
        Ok((self.domain.h() * pairwise_sum(&terms)).powf(T::one() / p))
    }

    pub fn sup_norm(&self) -> T {
        self.values
            .iter()
            .fold(T::zero(), |acc, v| acc.max(v.abs()))
    }

    /// Squared discrete `H^1_0` seminorm `sum_{j=0..n} (u_{j+1} - u_j)^2 / h`, boundary zeros included.
    pub fn h1_norm_sq(&self) -> T {
        let n = self.values.len();
        let mut terms = Vec::with_capacity(n + 1);
        let mut prev = T::zero();
        for &v in &self.values {
            terms.push((v - prev) * (v - prev));
            prev = v;
        }
        terms.push(prev * prev);
        pairwise_sum(&terms) / self.domain.h()
    }

    pub fn h1_norm(&self) -> T {
        self.h1_norm_sq().sqrt()
    }

    /// `||u||_{m+1}^{m+1} / (m+1)`; for `m = 0` the `L^1_h` norm.
    pub fn varphi_energy(&self, nl: &PowerNonlinearity<T>) -> T {
        let terms: Vec<T> = self.values.iter().map(|&v| nl.psi(v)).collect();
        self.domain.h() * pairwise_sum(&terms)
    }

    /// Writes `x,value` rows including the two boundary zeros.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "x,value")?;
        writeln!(w, "{},0", self.domain.a())?;
        for (x, v) in self.domain.nodes().zip(&self.values) {
            writeln!(w, "{x},{v}")?;
        }
        writeln!(w, "{},0", self.domain.b())
    }
}

/// Solves a tridiagonal system by the Thomas algorithm. `lower[0]` and
/// `upper[n-1]` are ignored. Requires a nonsingular, diagonally dominant matrix.
pub(crate) fn solve_tridiagonal<T: Real>(
    lower: &[T],
    diag: &[T],
    upper: &[T],
    rhs: &[T],
) -> Vec<T> {
    let n = diag.len();
    let mut c = vec![T::zero(); n];
    let mut d = vec![T::zero(); n];
    let mut beta = diag[0];
    c[0] = upper[0] / beta;
    d[0] = rhs[0] / beta;
    for i in 1..n {
        beta = diag[i] - lower[i] * c[i - 1];
        c[i] = upper[i] / beta;
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        d[i] = d[i] - c[i] * d[i + 1];
    }
    d
}

/// Three-point Dirichlet Laplacian on a [`Domain1D`].
#[derive(Debug, Clone)]
pub struct DirichletLaplacian<T> {
    domain: Domain1D<T>,
    eigenvalues: Vec<T>,
}

impl<T: Real> DirichletLaplacian<T> {
    pub fn new(domain: Domain1D<T>) -> Self {
        let h = domain.h();
        let four_over_h2 = T::lit(4.0) / (h * h);
        let eigenvalues = (1..=domain.n())
            .map(|k| {
                let s = (T::from_usize(k).unwrap() * T::PI() * h / (T::lit(2.0) * domain.length()))
                    .sin();
                four_over_h2 * s * s
            })
            .collect();
        Self {
            domain,
            eigenvalues,
        }
    }

    pub fn domain(&self) -> &Domain1D<T> {
        &self.domain
    }

    /// Eigenvalues of `-Delta_h`, increasing, `k = 1..n` stored at index `k-1`.
    pub fn eigenvalues(&self) -> &[T] {
        &self.eigenvalues
    }

    /// Largest eigenvalue of `-Delta_h`.
    pub fn spectral_radius(&self) -> T {
        *self.eigenvalues.last().unwrap()
    }

    /// Sine mode `k` (1-based), normalized in `L^2_h`.
    pub fn eigenvector(&self, k: usize) -> GridFunction<T> {
        assert!(k >= 1 && k <= self.domain.n(), "mode index out of range");
        let n1 = T::from_usize(self.domain.n() + 1).unwrap();
        let scale = (T::lit(2.0) / self.domain.length()).sqrt();
        let kk = T::from_usize(k).unwrap();
        GridFunction::from_raw(
            self.domain,
            (1..=self.domain.n())
                .map(|j| scale * (kk * T::PI() * T::from_usize(j).unwrap() / n1).sin())
                .collect(),
        )
    }

    fn check(&self, u: &GridFunction<T>) -> Result<()> {
        if *u.domain() == self.domain {
            Ok(())
        } else {
            Err(Error::DomainMismatch)
        }
    }

    /// `(u_{j-1} - 2 u_j + u_{j+1}) / h^2` with zero boundary values.
    pub fn apply(&self, u: &GridFunction<T>) -> Result<GridFunction<T>> {
        self.check(u)?;
        Ok(GridFunction::from_raw(
            self.domain,
            self.apply_slice(u.values()),
        ))
    }

    pub(crate) fn apply_slice(&self, u: &[T]) -> Vec<T> {
        let h = self.domain.h();
        let inv_h2 = T::one() / (h * h);
        let n = u.len();
        (0..n)
            .map(|j| {
                let left = if j > 0 { u[j - 1] } else { T::zero() };
                let right = if j + 1 < n { u[j + 1] } else { T::zero() };
                (left - T::lit(2.0) * u[j] + right) * inv_h2
            })
            .collect()
    }

    /// Solves `(I - lambda Delta_h) u = f` for `lambda >= 0`.
    pub fn solve_resolvent(&self, lambda: T, f: &GridFunction<T>) -> Result<GridFunction<T>> {
        self.check(f)?;
        if !(lambda >= T::zero()) {
            return Err(Error::OutOfRange {
                what: "resolvent parameter must be >= 0",
                value: lambda.as_f64(),
            });
        }
        if lambda == T::zero() {
            return Ok(f.clone());
        }
        Ok(GridFunction::from_raw(
            self.domain,
            self.shifted_solve(T::one(), lambda, f.values()),
        ))
    }

    /// Solves `(alpha I - beta Delta_h) u = f`.
    pub(crate) fn shifted_solve(&self, alpha: T, beta: T, f: &[T]) -> Vec<T> {
        let h = self.domain.h();
        let off = -beta / (h * h);
        let n = f.len();
        let diag = vec![alpha - T::lit(2.0) * off; n];
        let offs = vec![off; n];
        solve_tridiagonal(&offs, &diag, &offs, f)
    }

    /// Solves `-Delta_h u = f`.
    pub fn inv_neg_laplacian(&self, f: &GridFunction<T>) -> Result<GridFunction<T>> {
        self.check(f)?;
        Ok(GridFunction::from_raw(
            self.domain,
            self.shifted_solve(T::zero(), T::one(), f.values()),
        ))
    }

    /// `(u, (-Delta_h)^{-1} v)` in `L^2_h`.
    pub fn h_minus1_inner(&self, u: &GridFunction<T>, v: &GridFunction<T>) -> Result<T> {
        self.check(u)?;
        let w = self.inv_neg_laplacian(v)?;
        u.l2_inner(&w)
    }

    pub fn h_minus1_norm_sq(&self, u: &GridFunction<T>) -> Result<T> {
        Ok(self.h_minus1_inner(u, u)?.max(T::zero()))
    }

    pub fn h_minus1_norm(&self, u: &GridFunction<T>) -> Result<T> {
        Ok(self.h_minus1_norm_sq(u)?.sqrt())
    }

    /// Orthogonal projection onto the first `n_modes` sine modes.
    pub fn galerkin_project(&self, u: &GridFunction<T>, n_modes: usize) -> Result<GridFunction<T>> {
        self.check(u)?;
        if n_modes == 0 || n_modes > self.domain.n() {
            return Err(Error::OutOfRange {
                what: "number of Galerkin modes must lie in 1..=n",
                value: n_modes as f64,
            });
        }
        if n_modes == self.domain.n() {
            return Ok(u.clone());
        }
        let mut out = GridFunction::zeros(self.domain);
        for k in 1..=n_modes {
            let e = self.eigenvector(k);
            let c = u.l2_inner(&e)?;
            out.axpy(c, &e)?;
        }
        Ok(out)
    }

    /// Checks the subgradient inequality `varphi(u) <= (-Delta_h w, u - y)_{H^{-1}} + varphi(y)`
    /// for every `y` in `y_samples`, given a selection `w_j in phi(u_j)`.
    pub fn subgradient_check(
        &self,
        nl: &PowerNonlinearity<T>,
        u: &GridFunction<T>,
        w: &GridFunction<T>,
        y_samples: &[GridFunction<T>],
    ) -> Result<CertificateReport> {
        self.check(u)?;
        self.check(w)?;
        let tol = T::lit(1e-9);
        for (j, (&uj, &wj)) in u.values().iter().zip(w.values()).enumerate() {
            let set = nl.phi_set(uj);
            if !set.contains(wj, tol) {
                return Err(Error::Precondition {
                    node: j,
                    detail: format!("selection {wj} not in phi({uj}) = [{}, {}]", set.lo, set.hi),
                });
            }
        }
        let neg_lap_w = self.apply(w)?.scale(-T::one());
        let phi_u = u.varphi_energy(nl);
        let mut violations = 0;
        let mut worst = T::infinity();
        let mut worst_idx = 0usize;
        for (i, y) in y_samples.iter().enumerate() {
            self.check(y)?;
            let pairing = self.h_minus1_inner(&neg_lap_w, &u.sub(y)?)?;
            let margin = pairing + y.varphi_energy(nl) - phi_u;
            if margin < -tol {
                violations += 1;
            }
            if margin < worst {
                worst = margin;
                worst_idx = i;
            }
        }
        let check = InequalityCheck {
            name: "subgradient inequality for -Delta w".into(),
            evaluations: y_samples.len(),
            violations,
            worst_margin: if y_samples.is_empty() {
                0.0
            } else {
                worst.as_f64()
            },
            worst_point: vec![worst_idx as f64],
            passed: violations == 0,
        };
        Ok(CertificateReport {
            m: nl.m().as_f64(),
            eps_y: None,
            delta: None,
            passed: check.passed,
            checks: vec![check],
        })
    }
}
