//! The radial angle diffusion
//! `d theta = sqrt(kappa) dB + (4 - kappa)/2 tan(theta/2) du`,
//! integrated by Euler-Maruyama and absorbed near the antipodal angles.

use super::SleError;
use crate::rng;
use rand_distr::{Distribution, StandardNormal};

/// One absorbed sample path of the angle diffusion.
#[derive(Clone, Debug)]
pub struct ThetaPath {
    pub theta0: f64,
    pub du: f64,
    /// log-conformal-radius clock at absorption
    pub lifetime: f64,
    /// +1 when absorbed at +pi, -1 at -pi
    pub exit_side: i8,
    /// full path, one value per step (kept only when requested)
    pub path: Vec<f64>,
}

/// Integrate the diffusion from `theta0` until it leaves
/// `(-pi + delta, pi - delta)` with `delta = 10 sqrt(kappa du)`.
pub fn radial_theta(
    kappa: f64,
    theta0: f64,
    du: f64,
    keep_path: bool,
    seed: u64,
) -> Result<ThetaPath, SleError> {
    if !(kappa > 0.0 && kappa <= 8.0) {
        return Err(SleError::InvalidParameter("kappa must be in (0, 8]"));
    }
    if !(du > 0.0 && du <= 1e-4) {
        return Err(SleError::InvalidParameter("du must be in (0, 1e-4]"));
    }
    if theta0.abs() >= core::f64::consts::PI {
        return Err(SleError::InvalidParameter("|theta0| must be < pi"));
    }
    let delta = 10.0 * (kappa * du).sqrt();
    let bound = core::f64::consts::PI - delta;
    let drift_coef = 0.5 * (4.0 - kappa);
    let diff = (kappa * du).sqrt();
    let mut rg = rng::root(seed);
    let mut theta = theta0;
    let mut path = Vec::new();
    let mut u = 0.0;
    // hard cap keeps pathological parameter choices finite
    let max_steps = (1e8 / (du * 1e4)) as usize + 1_000_000;
    for _ in 0..max_steps {
        if keep_path {
            path.push(theta);
        }
        if theta.abs() >= bound {
            break;
        }
        let g: f64 = StandardNormal.sample(&mut rg);
        theta += drift_coef * (0.5 * theta).tan() * du + diff * g;
        u += du;
    }
    Ok(ThetaPath {
        theta0,
        du,
        lifetime: u,
        exit_side: if theta >= 0.0 { 1 } else { -1 },
        path,
    })
}
