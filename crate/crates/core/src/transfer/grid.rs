//! Finite point sets on projective space and the rule assigning an
//! arbitrary line to grid points.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::cocycle::{wedge_sine, ProjectivePoint};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignmentRule {
    /// `d = 1`: projective space is a point.
    Single,
    /// `d = 2`: weight split between the two neighbouring angles.
    LinearAngle,
    /// `d >= 3`: all weight to the nearest grid point.
    Nearest,
}

#[derive(Debug, Clone)]
pub struct ProjectiveGrid {
    dim: usize,
    resolution: usize,
    points: Vec<ProjectivePoint>,
    rule: AssignmentRule,
    covering_radius: f64,
}

/// Number of probe points per grid point used to estimate the covering
/// radius in dimension 3 and above.
const PROBES_PER_POINT: usize = 10;

pub fn build_grid(dim: usize, n: usize) -> Result<ProjectiveGrid> {
    if dim == 0 || n == 0 {
        return Err(Error::InvalidArgument("grid needs d >= 1 and N >= 1".into()));
    }
    let (points, rule) = match dim {
        1 => (vec![ProjectivePoint::from_slice(&[1.0])?], AssignmentRule::Single),
        2 => (
            (0..n)
                .map(|i| ProjectivePoint::from_angle(std::f64::consts::PI * i as f64 / n as f64))
                .collect(),
            AssignmentRule::LinearAngle,
        ),
        3 => (fibonacci_hemisphere(n)?, AssignmentRule::Nearest),
        _ => (halton_directions(dim, n)?, AssignmentRule::Nearest),
    };
    let mut grid = ProjectiveGrid {
        dim,
        resolution: n,
        points,
        rule,
        covering_radius: 0.0,
    };
    grid.covering_radius = match dim {
        1 => 0.0,
        2 => (std::f64::consts::PI / (2.0 * n as f64)).sin(),
        _ => grid.probe_covering_radius(),
    };
    Ok(grid)
}

/// Quasi-uniform points on the hemisphere `x_0 > 0`, equal-area in `x_0`.
fn fibonacci_hemisphere(n: usize) -> Result<Vec<ProjectivePoint>> {
    let golden = (1.0 + 5f64.sqrt()) / 2.0;
    (0..n)
        .map(|i| {
            let h = (i as f64 + 0.5) / n as f64;
            let r = (1.0 - h * h).sqrt();
            let phi = 2.0 * std::f64::consts::PI * i as f64 / golden;
            ProjectivePoint::from_slice(&[h, r * phi.cos(), r * phi.sin()])
        })
        .collect()
}

fn radical_inverse(mut i: usize, base: usize) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

const PRIMES: [usize; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

/// Halton points pushed through the inverse normal CDF and normalized.
fn halton_directions(dim: usize, n: usize) -> Result<Vec<ProjectivePoint>> {
    if dim > PRIMES.len() {
        return Err(Error::InvalidArgument(format!("grid dimension {dim} is not supported")));
    }
    let normal = Normal::standard();
    (1..=n)
        .map(|i| {
            let v: Vec<f64> = PRIMES[..dim]
                .iter()
                .map(|&b| normal.inverse_cdf(radical_inverse(i, b)))
                .collect();
            ProjectivePoint::from_slice(&v)
        })
        .collect()
}

impl ProjectiveGrid {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[ProjectivePoint] {
        &self.points
    }

    pub fn rule(&self) -> AssignmentRule {
        self.rule
    }

    /// Largest distance from a line to its nearest grid point (exact for
    /// `d <= 2`, estimated from probe lines otherwise).
    pub fn covering_radius(&self) -> f64 {
        self.covering_radius
    }

    /// Grid points and weights (summing to 1) representing the line `v`.
    /// The second weight is 0 unless the rule interpolates.
    #[inline]
    pub fn assign(&self, v: &[f64]) -> [(usize, f64); 2] {
        match self.rule {
            AssignmentRule::Single => [(0, 1.0), (0, 0.0)],
            AssignmentRule::LinearAngle => {
                let n = self.points.len();
                let a = v[1].atan2(v[0]).rem_euclid(std::f64::consts::PI);
                let h = a * n as f64 / std::f64::consts::PI;
                let i0 = (h.floor() as usize).min(n - 1);
                let frac = (h - i0 as f64).clamp(0.0, 1.0);
                [(i0, 1.0 - frac), ((i0 + 1) % n, frac)]
            }
            AssignmentRule::Nearest => [(self.nearest(v), 1.0), (0, 0.0)],
        }
    }

    pub fn nearest(&self, v: &[f64]) -> usize {
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut best = 0;
        let mut best_dot = -1.0;
        for (i, p) in self.points.iter().enumerate() {
            let dot: f64 = p.as_slice().iter().zip(v).map(|(a, b)| a * b).sum::<f64>().abs() / norm;
            if dot > best_dot {
                best_dot = dot;
                best = i;
            }
        }
        best
    }

    fn probe_covering_radius(&self) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(0x9e37_79b9);
        let normal = Normal::standard();
        let probes = (PROBES_PER_POINT * self.points.len()).max(2000);
        let mut radius = 0.0f64;
        let mut v = vec![0.0; self.dim];
        for _ in 0..probes {
            for x in v.iter_mut() {
                *x = normal.inverse_cdf(rng.random::<f64>().clamp(1e-12, 1.0 - 1e-12));
            }
            let i = self.nearest(&v);
            radius = radius.max(wedge_sine(self.points[i].as_slice(), &v));
        }
        radius
    }
}
