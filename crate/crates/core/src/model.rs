//! Delay systems, their two-mode switched split, and closed-loop assembly
//! for an observer-based controller.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Delay bounds in samples with `1 ≤ d_m ≤ d_n ≤ d_M`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DelayBounds {
    pub d_m: usize,
    pub d_n: usize,
    #[serde(rename = "d_M")]
    pub d_big: usize,
}

impl DelayBounds {
    pub fn new(d_m: usize, d_n: usize, d_big: usize) -> Result<Self> {
        if d_m < 1 || d_m > d_n || d_n > d_big {
            return Err(Error::InvalidDelays(format!(
                "need 1 <= d_m <= d_n <= d_M, got ({d_m}, {d_n}, {d_big})"
            )));
        }
        Ok(Self { d_m, d_n, d_big })
    }

    /// Mode bounds `(d_mj, d_Mj)`: mode 1 covers `[d_m, d_n]`, mode 2
    /// covers `[d_n, d_M]`.
    pub fn mode(&self, j: usize) -> (usize, usize) {
        match j {
            1 => (self.d_m, self.d_n),
            2 => (self.d_n, self.d_big),
            _ => panic!("mode index must be 1 or 2, got {j}"),
        }
    }
}

/// `x(k+1) = A x(k) + A_n x(k−d_n) + A_d x(k−d(k))`, `d(k) ∈ [d_m, d_M]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DelaySystem {
    pub a: DMatrix<f64>,
    pub a_n: DMatrix<f64>,
    pub a_d: DMatrix<f64>,
    pub bounds: DelayBounds,
}

impl DelaySystem {
    pub fn new(
        a: DMatrix<f64>,
        a_n: DMatrix<f64>,
        a_d: DMatrix<f64>,
        bounds: DelayBounds,
    ) -> Result<Self> {
        let n = a.nrows();
        if n == 0 {
            return Err(Error::InvalidModel("state dimension must be at least 1".into()));
        }
        for (name, m) in [("A", &a), ("A_n", &a_n), ("A_d", &a_d)] {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::InvalidModel(format!(
                    "{name} is {}x{}, expected {n}x{n}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidModel(format!("{name} has non-finite entries")));
            }
        }
        Ok(Self {
            a,
            a_n,
            a_d,
            bounds,
        })
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// The system as one bounded-delay subsystem on `[d_m, d_M]`. Possible
    /// when the nominal delay sits at an end of the range or `A_n = 0`.
    pub fn as_single_interval(&self) -> Result<BoundedDelaySubsystem> {
        let n = self.dim();
        let zero = DMatrix::zeros(n, n);
        let b = self.bounds;
        let (a_m, a_big) = if self.a_n.iter().all(|v| *v == 0.0) {
            (zero.clone(), zero)
        } else if b.d_n == b.d_m {
            (self.a_n.clone(), zero)
        } else if b.d_n == b.d_big {
            (zero, self.a_n.clone())
        } else {
            return Err(Error::InvalidModel(
                "single-interval analysis needs A_n = 0 or d_n at an end of [d_m, d_M]".into(),
            ));
        };
        BoundedDelaySubsystem::new(self.a.clone(), a_m, a_big, self.a_d.clone(), b.d_m, b.d_big)
    }

    /// One step of the recursion given the history (newest first) and the
    /// current delay.
    pub fn step(&self, history: &HistoryVector, d_k: usize) -> DVector<f64> {
        &self.a * history.at(0) + &self.a_n * history.at(self.bounds.d_n) + &self.a_d * history.at(d_k)
    }
}

/// `x(k+1) = A x(k) + A_m x(k−d_m) + A_M x(k−d_M) + A_d x(k−d(k))`, with
/// `d(k) ∈ [d_m, d_M]`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundedDelaySubsystem {
    pub a: DMatrix<f64>,
    pub a_m: DMatrix<f64>,
    pub a_big: DMatrix<f64>,
    pub a_d: DMatrix<f64>,
    pub d_m: usize,
    pub d_big: usize,
}

impl BoundedDelaySubsystem {
    pub fn new(
        a: DMatrix<f64>,
        a_m: DMatrix<f64>,
        a_big: DMatrix<f64>,
        a_d: DMatrix<f64>,
        d_m: usize,
        d_big: usize,
    ) -> Result<Self> {
        if d_m < 1 || d_m > d_big {
            return Err(Error::InvalidDelays(format!(
                "need 1 <= d_m <= d_M, got ({d_m}, {d_big})"
            )));
        }
        let n = a.nrows();
        if n == 0 {
            return Err(Error::InvalidModel("state dimension must be at least 1".into()));
        }
        for (name, m) in [("A", &a), ("A_m", &a_m), ("A_M", &a_big), ("A_d", &a_d)] {
            if m.shape() != (n, n) {
                return Err(Error::InvalidModel(format!("{name} must be {n}x{n}")));
            }
        }
        Ok(Self {
            a,
            a_m,
            a_big,
            a_d,
            d_m,
            d_big,
        })
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn d_delta(&self) -> usize {
        self.d_big - self.d_m
    }

    /// The one-step map `f_j` for a delay inside the subsystem bounds.
    pub fn step(&self, history: &HistoryVector, d_k: usize) -> DVector<f64> {
        &self.a * history.at(0)
            + &self.a_m * history.at(self.d_m)
            + &self.a_big * history.at(self.d_big)
            + &self.a_d * history.at(d_k)
    }
}

/// Splits a system into its two bounded-delay modes: mode 1 handles
/// `d(k) ≤ d_n` and carries the nominal delay term at its upper bound, mode 2
/// carries it at its lower bound.
pub fn split_switched(sys: &DelaySystem) -> (BoundedDelaySubsystem, BoundedDelaySubsystem) {
    let n = sys.dim();
    let zero = DMatrix::zeros(n, n);
    let b = sys.bounds;
    let s1 = BoundedDelaySubsystem {
        a: sys.a.clone(),
        a_m: zero.clone(),
        a_big: sys.a_n.clone(),
        a_d: sys.a_d.clone(),
        d_m: b.d_m,
        d_big: b.d_n,
    };
    let s2 = BoundedDelaySubsystem {
        a: sys.a.clone(),
        a_m: sys.a_n.clone(),
        a_big: zero,
        a_d: sys.a_d.clone(),
        d_m: b.d_n,
        d_big: b.d_big,
    };
    (s1, s2)
}

/// Active mode for a delay value; the boundary `d_k = d_n` belongs to mode 1.
pub fn sigma(d_k: usize, bounds: &DelayBounds) -> Result<usize> {
    if d_k < bounds.d_m || d_k > bounds.d_big {
        return Err(Error::InvalidDelays(format!(
            "delay {d_k} outside [{}, {}]",
            bounds.d_m, bounds.d_big
        )));
    }
    Ok(if d_k <= bounds.d_n { 1 } else { 2 })
}

/// `x_p(k+1) = A_p x_p(k) + B_p u(k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PlantModel {
    pub a_p: DMatrix<f64>,
    pub b_p: DMatrix<f64>,
}

impl PlantModel {
    pub fn new(a_p: DMatrix<f64>, b_p: DMatrix<f64>) -> Result<Self> {
        let n = a_p.nrows();
        if n == 0 || a_p.ncols() != n {
            return Err(Error::InvalidModel("A_p must be square and nonempty".into()));
        }
        if b_p.nrows() != n || b_p.ncols() == 0 {
            return Err(Error::InvalidModel(format!(
                "B_p must have {n} rows and at least one column"
            )));
        }
        Ok(Self { a_p, b_p })
    }

    pub fn n_p(&self) -> usize {
        self.a_p.nrows()
    }

    pub fn m(&self) -> usize {
        self.b_p.ncols()
    }
}

/// Gains of `u(k) = K x̂_p(k) + F e_y(k)` and the observer gain `L`.
#[derive(Clone, Debug, PartialEq)]
pub struct ControllerGains {
    pub k: DMatrix<f64>,
    pub f: DMatrix<f64>,
    pub l: DMatrix<f64>,
}

impl ControllerGains {
    pub fn validate(&self, plant: &PlantModel) -> Result<()> {
        let (n, m) = (plant.n_p(), plant.m());
        if self.k.shape() != (m, n) || self.f.shape() != (m, n) || self.l.shape() != (n, n) {
            return Err(Error::Dimension(format!(
                "gains must be K,F: {m}x{n} and L: {n}x{n}"
            )));
        }
        Ok(())
    }
}

/// Closed loop on `(x_p, e)` with `e = x_p − x̂_p`.
pub fn build_closed_loop(
    plant: &PlantModel,
    gains: &ControllerGains,
    bounds: DelayBounds,
) -> Result<DelaySystem> {
    gains.validate(plant)?;
    let np = plant.n_p();
    let (ap, bp) = (&plant.a_p, &plant.b_p);
    let bk = bp * &gains.k;
    let bf = bp * &gains.f;
    let l = &gains.l;
    let mut a = DMatrix::zeros(2 * np, 2 * np);
    a.view_mut((0, 0), (np, np)).copy_from(&(ap + &bk));
    a.view_mut((0, np), (np, np)).copy_from(&(-&bk));
    a.view_mut((np, np), (np, np)).copy_from(ap);
    let mut a_d = DMatrix::zeros(2 * np, 2 * np);
    a_d.view_mut((0, 0), (np, np)).copy_from(&bf);
    a_d.view_mut((np, 0), (np, np)).copy_from(&(-l));
    let mut a_n = DMatrix::zeros(2 * np, 2 * np);
    a_n.view_mut((0, 0), (np, np)).copy_from(&(-&bf));
    a_n.view_mut((0, np), (np, np)).copy_from(&bf);
    a_n.view_mut((np, 0), (np, np)).copy_from(l);
    a_n.view_mut((np, np), (np, np)).copy_from(&(-l));
    DelaySystem::new(a, a_n, a_d, bounds)
}

/// State history `[x(k), x(k−1), …, x(k−d_M)]`, newest first.
#[derive(Clone, Debug, PartialEq)]
pub struct HistoryVector {
    samples: Vec<DVector<f64>>,
}

impl HistoryVector {
    pub fn new(samples: Vec<DVector<f64>>) -> Result<Self> {
        let n = samples
            .first()
            .map(|s| s.len())
            .ok_or_else(|| Error::InvalidModel("history must not be empty".into()))?;
        if n == 0 || samples.iter().any(|s| s.len() != n) {
            return Err(Error::Dimension("history samples must share a positive dimension".into()));
        }
        Ok(Self { samples })
    }

    /// Constant history `x(k−i) = c` for `i = 0..=d_max`.
    pub fn constant(c: &DVector<f64>, d_max: usize) -> Self {
        Self {
            samples: vec![c.clone(); d_max + 1],
        }
    }

    pub fn zeros(n: usize, d_max: usize) -> Self {
        Self::constant(&DVector::zeros(n), d_max)
    }

    /// Stacked vector `x̄(k)` of length `n(d_M+1)`.
    pub fn from_stacked(v: &DVector<f64>, n: usize) -> Result<Self> {
        if n == 0 || !v.len().is_multiple_of(n) || v.len() < n {
            return Err(Error::Dimension("stacked history length must be a multiple of n".into()));
        }
        Ok(Self {
            samples: v
                .as_slice()
                .chunks(n)
                .map(DVector::from_column_slice)
                .collect(),
        })
    }

    /// `x(k−i)`.
    pub fn at(&self, i: usize) -> &DVector<f64> {
        &self.samples[i]
    }

    pub fn dim(&self) -> usize {
        self.samples[0].len()
    }

    /// Number of stored samples, `d_M + 1`.
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[DVector<f64>] {
        &self.samples
    }

    pub fn stacked(&self) -> DVector<f64> {
        let n = self.dim();
        let mut v = DVector::zeros(n * self.len());
        for (i, s) in self.samples.iter().enumerate() {
            v.rows_mut(i * n, n).copy_from(s);
        }
        v
    }

    /// History one step later: `x_next` becomes the newest sample and the
    /// oldest sample drops out.
    pub fn shifted(&self, x_next: DVector<f64>) -> Self {
        let mut samples = Vec::with_capacity(self.samples.len());
        samples.push(x_next);
        samples.extend(self.samples[..self.samples.len() - 1].iter().cloned());
        Self { samples }
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|s| s * alpha).collect(),
        }
    }

    pub fn norm(&self) -> f64 {
        self.samples.iter().map(|s| s.norm_squared()).sum::<f64>().sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(r: usize, c: usize, d: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(r, c, d)
    }

    #[test]
    fn bounds_validation() {
        assert!(DelayBounds::new(0, 1, 2).is_err());
        assert!(DelayBounds::new(2, 1, 3).is_err());
        assert!(DelayBounds::new(1, 3, 2).is_err());
        assert!(DelayBounds::new(2, 2, 2).is_ok());
    }

    #[test]
    fn split_assigns_nominal_term() {
        let nmat = m(1, 1, &[0.3]);
        let sys = DelaySystem::new(
            m(1, 1, &[0.5]),
            nmat.clone(),
            m(1, 1, &[0.1]),
            DelayBounds::new(1, 3, 5).unwrap(),
        )
        .unwrap();
        let (s1, s2) = split_switched(&sys);
        assert_eq!((s1.d_m, s1.d_big, s2.d_m, s2.d_big), (1, 3, 3, 5));
        assert_eq!(s1.a_m[(0, 0)], 0.0);
        assert_eq!(s1.a_big, nmat);
        assert_eq!(s2.a_m, nmat);
        assert_eq!(s2.a_big[(0, 0)], 0.0);
    }

    #[test]
    fn sigma_boundary() {
        let b = DelayBounds::new(1, 1, 3).unwrap();
        assert_eq!(sigma(1, &b).unwrap(), 1);
        assert_eq!(sigma(2, &b).unwrap(), 2);
        assert!(sigma(4, &b).is_err());
        let b = DelayBounds::new(1, 3, 5).unwrap();
        assert_eq!(sigma(3, &b).unwrap(), 1);
    }

    #[test]
    fn closed_loop_blocks() {
        let plant = PlantModel::new(
            m(2, 2, &[0.6693, -0.0042, 0.4231, 1.0501]),
            m(2, 1, &[0.1647, 0.0960]),
        )
        .unwrap();
        let gains = ControllerGains {
            k: m(1, 2, &[-0.1925, -0.1702]),
            f: DMatrix::zeros(1, 2),
            l: m(2, 2, &[1.0, 2.0, 3.0, 4.0]),
        };
        let sys = build_closed_loop(&plant, &gains, DelayBounds::new(1, 1, 2).unwrap()).unwrap();
        let tl = sys.a.view((0, 0), (2, 2)).into_owned();
        let expect = m(2, 2, &[0.6376, -0.0322, 0.4046, 1.0338]);
        assert!((tl - expect).amax() < 1e-4);
        // with F = 0 only the observer gain survives in the delayed terms
        assert_eq!(sys.a_d.view((0, 0), (2, 4)).amax(), 0.0);
        assert_eq!(sys.a_d.view((2, 0), (2, 2)).into_owned(), -&gains.l);
        assert_eq!(sys.a_n.view((0, 0), (2, 4)).amax(), 0.0);
    }

    #[test]
    fn history_shift() {
        let h = HistoryVector::new(vec![
            DVector::from_vec(vec![1.0]),
            DVector::from_vec(vec![2.0]),
            DVector::from_vec(vec![3.0]),
        ])
        .unwrap();
        let s = h.shifted(DVector::from_vec(vec![0.0]));
        assert_eq!(s.stacked().as_slice(), &[0.0, 1.0, 2.0]);
        assert_eq!(HistoryVector::from_stacked(&h.stacked(), 1).unwrap(), h);
    }
}
