//! Finite-mode Brownian paths and the noise coefficients `B(t, X) dW`.
//!
//! A [`WienerPath`] stores the Brownian values `beta^k(t_i)` on its fine grid
//! rather than the raw increments. Coarsening subsamples those values, so a
//! coarse path describes exactly the same Brownian motion and repeated
//! coarsening composes bitwise.

use std::fmt;
use std::io::{self, Read, Write};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::real::Real;

const PATH_MAGIC: &[u8; 8] = b"SFDEWP01";

#[derive(Debug, Clone, PartialEq)]
pub struct WienerPath {
    seed: u64,
    dt: f64,
    n_steps: usize,
    /// `values[k][i] = beta^k(i dt)`, `values[k][0] = 0`.
    values: Vec<Vec<f64>>,
}

impl WienerPath {
    /// Samples `modes` independent Brownian motions on `n_steps` steps of size `dt`.
    ///
    /// Mode `k` draws from its own ChaCha20 stream (`stream = k`) keyed by `seed`,
    /// so adding modes never changes the existing ones.
    pub fn sample(seed: u64, dt: f64, n_steps: usize, modes: usize) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::OutOfRange {
                what: "fine time step must be positive",
                value: dt,
            });
        }
        if n_steps == 0 {
            return Err(Error::InvalidParameter(
                "a path needs at least one step".into(),
            ));
        }
        let sd = dt.sqrt();
        let values = (0..modes)
            .map(|k| {
                let mut rng = ChaCha20Rng::seed_from_u64(seed);
                rng.set_stream(k as u64);
                let mut w = Vec::with_capacity(n_steps + 1);
                let mut acc = 0.0;
                w.push(acc);
                for _ in 0..n_steps {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    acc += sd * z;
                    w.push(acc);
                }
                w
            })
            .collect();
        Ok(Self {
            seed,
            dt,
            n_steps,
            values,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn modes(&self) -> usize {
        self.values.len()
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.n_steps as f64
    }

    /// Brownian value of mode `k` at grid point `i`.
    pub fn value(&self, k: usize, i: usize) -> f64 {
        self.values[k][i]
    }

    pub fn increment(&self, k: usize, step: usize) -> f64 {
        self.values[k][step + 1] - self.values[k][step]
    }

    /// All mode increments over step `step`.
    pub fn increments_at<T: Real>(&self, step: usize) -> Vec<T> {
        (0..self.modes())
            .map(|k| T::lit(self.increment(k, step)))
            .collect()
    }

    pub fn mode_increments(&self, k: usize) -> Vec<f64> {
        (0..self.n_steps).map(|i| self.increment(k, i)).collect()
    }

    /// The same Brownian motion sampled every `factor` fine steps.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.n_steps.is_multiple_of(factor) {
            return Err(Error::PathMismatch(format!(
                "coarsening factor {factor} does not divide {} steps",
                self.n_steps
            )));
        }
        Ok(Self {
            seed: self.seed,
            dt: self.dt * factor as f64,
            n_steps: self.n_steps / factor,
            values: self
                .values
                .iter()
                .map(|w| w.iter().step_by(factor).copied().collect())
                .collect(),
        })
    }

    /// Compact little-endian dump: magic, seed, dt, n_steps, modes, then the
    /// Brownian values mode by mode.
    pub fn write_binary<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(PATH_MAGIC)?;
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&self.dt.to_le_bytes())?;
        w.write_all(&(self.n_steps as u64).to_le_bytes())?;
        w.write_all(&(self.modes() as u64).to_le_bytes())?;
        for mode in &self.values {
            for v in mode {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> io::Result<Self> {
        let bad = |msg: &str| io::Error::new(io::ErrorKind::InvalidData, msg.to_string());
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != PATH_MAGIC {
            return Err(bad("not a wiener path dump"));
        }
        let mut buf = [0u8; 8];
        let mut next = |r: &mut R| -> io::Result<[u8; 8]> {
            r.read_exact(&mut buf)?;
            Ok(buf)
        };
        let seed = u64::from_le_bytes(next(&mut r)?);
        let dt = f64::from_le_bytes(next(&mut r)?);
        let n_steps = u64::from_le_bytes(next(&mut r)?) as usize;
        let modes = u64::from_le_bytes(next(&mut r)?) as usize;
        let mut values = Vec::with_capacity(modes);
        for _ in 0..modes {
            let mut mode = Vec::with_capacity(n_steps + 1);
            for _ in 0..=n_steps {
                mode.push(f64::from_le_bytes(next(&mut r)?));
            }
            values.push(mode);
        }
        Ok(Self {
            seed,
            dt,
            n_steps,
            values,
        })
    }

    /// `step,t,dW_0,...` rows; header line carries the seed and fine step.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# seed={} dt={:e}", self.seed, self.dt)?;
        write!(w, "step,t")?;
        for k in 0..self.modes() {
            write!(w, ",dW_{k}")?;
        }
        writeln!(w)?;
        for i in 0..self.n_steps {
            write!(w, "{i},{:e}", i as f64 * self.dt)?;
            for k in 0..self.modes() {
                write!(w, ",{:e}", self.increment(k, i))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// User-supplied Lipschitz diffusion operator.
pub trait LipschitzNoise<T: Real>: Send + Sync {
    fn modes(&self) -> usize;

    /// Declared constant `L` with `sum_k ||(B(u) - B(v)) e_k||^2_{H^{-1}} <= L ||u - v||^2_{H^{-1}}`.
    fn lipschitz(&self) -> T;

    /// `B(t, x)` applied to the per-mode increments `dw`.
    fn apply(&self, t: T, x: &GridFunction<T>, dw: &[T]) -> GridFunction<T>;
}

#[derive(Clone)]
pub enum NoiseModel<T: Real> {
    /// `sum_k sigma^k dbeta^k`, independent of the state.
    Additive {
        modes: Vec<GridFunction<T>>,
    },
    /// `sum_k g^k X dbeta^k` with pointwise products.
    LinearMultiplicative {
        coeffs: Vec<GridFunction<T>>,
        c1_sum: T,
    },
    GeneralLipschitz(Arc<dyn LipschitzNoise<T>>),
}

impl<T: Real> fmt::Debug for NoiseModel<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Additive { modes } => f
                .debug_struct("Additive")
                .field("modes", &modes.len())
                .finish(),
            Self::LinearMultiplicative { coeffs, c1_sum } => f
                .debug_struct("LinearMultiplicative")
                .field("modes", &coeffs.len())
                .field("c1_sum", c1_sum)
                .finish(),
            Self::GeneralLipschitz(op) => f
                .debug_struct("GeneralLipschitz")
                .field("modes", &op.modes())
                .field("lipschitz", &op.lipschitz())
                .finish(),
        }
    }
}

/// `sup|g| + sup|g_{j+1} - g_j|/h`, the grid proxy for the `C^1` norm of a coefficient.
pub fn c1_proxy<T: Real>(g: &GridFunction<T>) -> T {
    let h = g.domain().h();
    let v = g.values();
    let grad = v
        .windows(2)
        .fold(T::zero(), |acc, w| acc.max((w[1] - w[0]).abs() / h));
    g.sup_norm() + grad
}

impl<T: Real> NoiseModel<T> {
    /// No noise (`K = 0`).
    pub fn none() -> Self {
        Self::LinearMultiplicative {
            coeffs: Vec::new(),
            c1_sum: T::zero(),
        }
    }

    pub fn linear_multiplicative(coeffs: Vec<GridFunction<T>>) -> Result<Self> {
        if let Some(first) = coeffs.first() {
            for g in &coeffs[1..] {
                first.same_domain(g)?;
            }
        }
        let c1_sum = coeffs
            .iter()
            .map(|g| {
                let c = c1_proxy(g);
                c * c
            })
            .fold(T::zero(), |a, b| a + b);
        if !c1_sum.is_finite() {
            return Err(Error::InvalidParameter(
                "noise coefficients must be finite".into(),
            ));
        }
        Ok(Self::LinearMultiplicative { coeffs, c1_sum })
    }

    pub fn additive(modes: Vec<GridFunction<T>>) -> Result<Self> {
        if let Some(first) = modes.first() {
            for g in &modes[1..] {
                first.same_domain(g)?;
            }
        }
        Ok(Self::Additive { modes })
    }

    pub fn general(op: Arc<dyn LipschitzNoise<T>>) -> Self {
        Self::GeneralLipschitz(op)
    }

    pub fn modes(&self) -> usize {
        match self {
            Self::Additive { modes } => modes.len(),
            Self::LinearMultiplicative { coeffs, .. } => coeffs.len(),
            Self::GeneralLipschitz(op) => op.modes(),
        }
    }

    pub fn is_deterministic(&self) -> bool {
        self.modes() == 0
    }

    /// Lipschitz constant of `B` from `H^{-1}` into Hilbert-Schmidt operators:
    /// `sum_k (C^1 proxy of g^k)^2` for linear multiplicative noise, 0 for additive.
    pub fn lipschitz_constant(&self) -> T {
        match self {
            Self::Additive { .. } => T::zero(),
            Self::LinearMultiplicative { c1_sum, .. } => *c1_sum,
            Self::GeneralLipschitz(op) => op.lipschitz(),
        }
    }

    /// `B(t, x) dW`.
    pub fn apply(&self, t: T, x: &GridFunction<T>, dw: &[T]) -> Result<GridFunction<T>> {
        if dw.len() != self.modes() {
            return Err(Error::ModeMismatch {
                expected: self.modes(),
                got: dw.len(),
            });
        }
        let mut out = GridFunction::zeros(*x.domain());
        match self {
            Self::Additive { modes } => {
                for (s, &b) in modes.iter().zip(dw) {
                    out.axpy(b, s)?;
                }
            }
            Self::LinearMultiplicative { coeffs, .. } => {
                for (g, &b) in coeffs.iter().zip(dw) {
                    x.same_domain(g)?;
                    for ((o, &gj), &xj) in
                        out.values_mut().iter_mut().zip(g.values()).zip(x.values())
                    {
                        *o += gj * xj * b;
                    }
                }
            }
            Self::GeneralLipschitz(op) => {
                out = op.apply(t, x, dw);
                x.same_domain(&out)?;
            }
        }
        Ok(out)
    }

    /// `||B(x)||^2` in Hilbert-Schmidt norm into `L^2_h`.
    pub fn hs_norm_sq(&self, t: T, x: &GridFunction<T>) -> Result<T> {
        Ok(match self {
            Self::Additive { modes } => modes.iter().map(|s| s.l2_norm_sq()).sum(),
            Self::LinearMultiplicative { coeffs, .. } => {
                let mut acc = T::zero();
                for g in coeffs {
                    acc += g.zip_map(x, |a, b| a * b)?.l2_norm_sq();
                }
                acc
            }
            Self::GeneralLipschitz(op) => {
                let k = op.modes();
                let mut acc = T::zero();
                for i in 0..k {
                    let mut unit = vec![T::zero(); k];
                    unit[i] = T::one();
                    acc += op.apply(t, x, &unit).l2_norm_sq();
                }
                acc
            }
        })
    }
}
