//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use delaylmi::model::{ControllerGains, DelayBounds, DelaySystem, PlantModel};
use delaylmi::simverify::{FunctionalBlocks, LkfCertificate};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub fn mat(r: usize, c: usize, row_major: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(r, c, row_major)
}

pub fn scalar(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

/// Second-order plant of the worked design example (sampling period 0.5 s).
pub fn example_plant() -> PlantModel {
    PlantModel::new(
        mat(2, 2, &[0.6693, -0.0042, 0.4231, 1.0501]),
        mat(2, 1, &[0.1647, 0.0960]),
    )
    .unwrap()
}

/// Published controller and observer gains for that plant.
pub fn example_gains() -> ControllerGains {
    ControllerGains {
        k: mat(1, 2, &[-0.1925, -0.1702]),
        f: mat(1, 2, &[-0.1755, -0.1601]),
        l: mat(2, 2, &[-0.0032, -0.0007, 0.0578, 0.0525]),
    }
}

pub fn random_matrix(r: usize, c: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..=1.0))
}

pub fn random_vector(n: usize, rng: &mut impl Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-1.0..=1.0))
}

/// Symmetric positive definite matrix `GGᵀ + δI`.
pub fn random_spd(n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let g = random_matrix(n, n, rng);
    &g * g.transpose() + DMatrix::identity(n, n) * rng.random_range(0.01..0.5)
}

/// Coupling matrix `X` with `[[𝒵, X], [Xᵀ, 𝒵]] ⪰ 0` for `𝒵 = diag(Z, 3Z)`:
/// `X = L C Lᵀ` with `𝒵 = LLᵀ` and `‖C‖₂ ≤ 1`.
pub fn coupled_x(z: &DMatrix<f64>, rng: &mut impl Rng) -> DMatrix<f64> {
    let n = z.nrows();
    let mut zz = DMatrix::zeros(2 * n, 2 * n);
    zz.view_mut((0, 0), (n, n)).copy_from(z);
    zz.view_mut((n, n), (n, n)).copy_from(&(z * 3.0));
    let l = zz.clone().cholesky().expect("positive definite").l();
    let c = random_matrix(2 * n, 2 * n, rng);
    let norm = c.clone().singular_values().max();
    let c = c * (rng.random_range(0.0..1.0) / norm.max(1e-12));
    &l * c * l.transpose()
}

pub fn random_blocks(n: usize, p_dim: usize, rng: &mut impl Rng) -> FunctionalBlocks {
    let z2 = random_spd(n, rng);
    FunctionalBlocks {
        p: random_spd(p_dim, rng),
        q1: random_spd(n, rng),
        q2: random_spd(n, rng),
        z1: random_spd(n, rng),
        x: coupled_x(&z2, rng),
        z2,
    }
}

pub fn random_certificate(n: usize, bounds: DelayBounds, rng: &mut impl Rng) -> LkfCertificate {
    let modes = [random_blocks(n, 4 * n, rng), random_blocks(n, 3 * n, rng)];
    LkfCertificate::new(n, bounds, modes, random_spd(n, rng), random_spd(n, rng)).unwrap()
}

/// Random system whose delay-free part has spectral radius `radius` and
/// whose delayed terms have entries of size up to `coupling`.
pub fn random_system(n: usize, bounds: DelayBounds, radius: f64, coupling: f64, rng: &mut impl Rng) -> DelaySystem {
    let a = random_matrix(n, n, rng);
    let rho = delaylmi::linalg::spectral_radius(&a).max(1e-9);
    DelaySystem::new(
        a * (radius / rho),
        random_matrix(n, n, rng) * coupling,
        random_matrix(n, n, rng) * coupling,
        bounds,
    )
    .unwrap()
}
