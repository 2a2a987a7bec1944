//! Piecewise test surfaces on `[-0.5, 0.5]^2`.
//!
//! Each region carries an independent constant-mean GP realization with a
//! squared-exponential kernel. Region means are 0 or 128, so every region
//! boundary is a jump of about 128.
//!
//! | case | regions | boundary |
//! |------|---------|----------|
//! | a    | 2 | line `x1 + x2 = 0.0125` |
//! | b    | 2 | circle of radius 0.2625 about the origin |
//! | c    | 2 | triangle `(-0.4125,-0.4) (-0.4125,0.4) (0.445,0)`, sharp tip to the right |
//! | d    | 3 | vertical bands split at `x1 = -0.1625` and `x1 = 0.1625`, means 0/128/0 |
//! | flat | 1 | none (stationary control) |
//!
//! The boundaries avoid the nodes of the 41 x 41 test grid, so no test point
//! lies exactly on a jump.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel;
use crate::linalg::Factor;
use crate::rng::rng_from;
use crate::types::{Dataset, KernelParams};

pub const DOMAIN_LO: f64 = -0.5;
pub const DOMAIN_HI: f64 = 0.5;
pub const GRID_SIDE: usize = 41;
pub const JUMP_MEAN: f64 = 128.0;

const DOMAIN_TOL: f64 = 1e-12;
const LINE_OFFSET: f64 = 0.0125;
const TRIANGLE: [[f64; 2]; 3] = [[-0.4125, -0.4], [-0.4125, 0.4], [0.445, 0.0]];
const CIRCLE_RADIUS: f64 = 0.2625;
const BAND_EDGES: [f64; 2] = [-0.1625, 0.1625];
const POLYLINE_SEGMENTS: usize = 2400;

// Seed path tags.
const TAG_INPUTS: u64 = 1;
const TAG_SURFACE: u64 = 2;
const TAG_NOISE: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CaseId {
    #[serde(rename = "a")]
    A,
    #[serde(rename = "b")]
    B,
    #[serde(rename = "c")]
    C,
    #[serde(rename = "d")]
    D,
    #[serde(rename = "flat")]
    Flat,
}

impl CaseId {
    pub const PAPER: [CaseId; 4] = [CaseId::A, CaseId::B, CaseId::C, CaseId::D];

    pub fn as_str(self) -> &'static str {
        match self {
            CaseId::A => "a",
            CaseId::B => "b",
            CaseId::C => "c",
            CaseId::D => "d",
            CaseId::Flat => "flat",
        }
    }

    pub fn index(self) -> u64 {
        match self {
            CaseId::A => 0,
            CaseId::B => 1,
            CaseId::C => 2,
            CaseId::D => 3,
            CaseId::Flat => 4,
        }
    }
}

impl fmt::Display for CaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CaseId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "a" => Ok(CaseId::A),
            "b" => Ok(CaseId::B),
            "c" => Ok(CaseId::C),
            "d" => Ok(CaseId::D),
            "flat" => Ok(CaseId::Flat),
            other => Err(Error::InvalidParameter(format!("unknown case {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub id: usize,
    pub mean: f64,
    pub kernel: KernelParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimCase {
    pub id: CaseId,
    pub regions: Vec<Region>,
}

impl SimCase {
    /// The case with the default generating kernel (variance 25, lengthscale 0.2).
    pub fn new(id: CaseId) -> Self {
        Self::with_kernel(id, 25.0, 0.2)
    }

    pub fn with_kernel(id: CaseId, signal_variance: f64, lengthscale: f64) -> Self {
        let means: &[f64] = match id {
            CaseId::A | CaseId::B | CaseId::C => &[0.0, JUMP_MEAN],
            CaseId::D => &[0.0, JUMP_MEAN, 0.0],
            CaseId::Flat => &[0.0],
        };
        let regions = means
            .iter()
            .enumerate()
            .map(|(id, &mean)| Region {
                id,
                mean,
                kernel: KernelParams {
                    signal_variance,
                    lengthscales: vec![lengthscale; 2],
                    noise_variance: 0.0,
                    mean,
                },
            })
            .collect();
        SimCase { id, regions }
    }
}

fn check_domain(x: &[f64]) -> Result<()> {
    let inside = x.len() == 2
        && x
            .iter()
            .all(|v| *v >= DOMAIN_LO - DOMAIN_TOL && *v <= DOMAIN_HI + DOMAIN_TOL);
    if inside {
        Ok(())
    } else {
        Err(Error::OutOfDomain(x.to_vec()))
    }
}

/// Signed distance-like test for the triangle: non-negative inside or on the edge.
fn triangle_level(x: &[f64]) -> f64 {
    (0..3)
        .map(|e| {
            let a = TRIANGLE[e];
            let b = TRIANGLE[(e + 1) % 3];
            let c = TRIANGLE[(e + 2) % 3];
            let cross = |p: [f64; 2]| (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
            // Orient so the opposite vertex is on the positive side.
            cross([x[0], x[1]]) * cross(c).signum()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Region index of `x`; points exactly on a boundary go to the positive side.
pub fn region_of(case: &SimCase, x: &[f64]) -> Result<usize> {
    check_domain(x)?;
    let pos = |v: f64| usize::from(v >= 0.0);
    Ok(match case.id {
        CaseId::A => pos(x[0] + x[1] - LINE_OFFSET),
        CaseId::B => pos(CIRCLE_RADIUS * CIRCLE_RADIUS - (x[0] * x[0] + x[1] * x[1])),
        CaseId::C => pos(triangle_level(x)),
        CaseId::D => pos(x[0] - BAND_EDGES[0]) + pos(x[0] - BAND_EDGES[1]),
        CaseId::Flat => 0,
    })
}

type Segment = ([f64; 2], [f64; 2]);

fn subdivide(points: &[[f64; 2]], closed: bool, per_edge: usize) -> Vec<Segment> {
    let edges = if closed { points.len() } else { points.len() - 1 };
    let mut out = Vec::with_capacity(edges * per_edge);
    for e in 0..edges {
        let a = points[e];
        let b = points[(e + 1) % points.len()];
        for s in 0..per_edge {
            let t0 = s as f64 / per_edge as f64;
            let t1 = (s + 1) as f64 / per_edge as f64;
            out.push((
                [a[0] + t0 * (b[0] - a[0]), a[1] + t0 * (b[1] - a[1])],
                [a[0] + t1 * (b[0] - a[0]), a[1] + t1 * (b[1] - a[1])],
            ));
        }
    }
    out
}

/// Boundary polylines of a case, discretized into short segments.
fn boundary_segments(id: CaseId) -> Vec<Segment> {
    match id {
        CaseId::A => subdivide(
            &[[-0.5, 0.5 + LINE_OFFSET], [0.5, -0.5 + LINE_OFFSET]],
            false,
            POLYLINE_SEGMENTS,
        ),
        CaseId::B => {
            let ring: Vec<[f64; 2]> = (0..POLYLINE_SEGMENTS)
                .map(|i| {
                    let a = std::f64::consts::TAU * i as f64 / POLYLINE_SEGMENTS as f64;
                    [CIRCLE_RADIUS * a.cos(), CIRCLE_RADIUS * a.sin()]
                })
                .collect();
            subdivide(&ring, true, 1)
        }
        CaseId::C => subdivide(&TRIANGLE, true, POLYLINE_SEGMENTS / 3),
        CaseId::D => BAND_EDGES
            .iter()
            .flat_map(|&e| subdivide(&[[e, DOMAIN_LO], [e, DOMAIN_HI]], false, POLYLINE_SEGMENTS / 2))
            .collect(),
        CaseId::Flat => Vec::new(),
    }
}

fn segment_distance(x: &[f64], (a, b): &Segment) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((x[0] - a[0]) * dx + (x[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (px, py) = (a[0] + t * dx, a[1] + t * dy);
    ((x[0] - px).powi(2) + (x[1] - py).powi(2)).sqrt()
}

/// Precomputed boundary geometry for repeated distance queries.
pub struct BoundaryGeometry {
    id: CaseId,
    segments: Vec<Segment>,
}

impl BoundaryGeometry {
    pub fn new(id: CaseId) -> Self {
        BoundaryGeometry {
            id,
            segments: boundary_segments(id),
        }
    }

    /// Distance to the nearest regional boundary; infinite when there is none.
    pub fn distance(&self, x: &[f64]) -> Result<f64> {
        check_domain(x)?;
        Ok(match self.id {
            CaseId::A => (x[0] + x[1] - LINE_OFFSET).abs() / std::f64::consts::SQRT_2,
            CaseId::Flat => f64::INFINITY,
            _ => self
                .segments
                .iter()
                .map(|s| segment_distance(x, s))
                .fold(f64::INFINITY, f64::min),
        })
    }
}

pub fn boundary_distance(case: &SimCase, x: &[f64]) -> Result<f64> {
    BoundaryGeometry::new(case.id).distance(x)
}

/// Draws the piecewise surface at `points`: one independent GP realization per
/// region, each over the points that fall in that region.
pub fn sample_surface(case: &SimCase, points: &[[f64; 2]], seed: u64) -> Result<Vec<f64>> {
    let labels: Vec<usize> = points
        .iter()
        .map(|p| region_of(case, p))
        .collect::<Result<_>>()?;
    let mut values = vec![0.0; points.len()];
    for region in &case.regions {
        let members: Vec<usize> = (0..points.len()).filter(|&i| labels[i] == region.id).collect();
        if members.is_empty() {
            continue;
        }
        let pts: Vec<[f64; 2]> = members.iter().map(|&i| points[i]).collect();
        let c = kernel::cov_matrix(&pts, &region.kernel)?;
        let l = Factor::new(c, region.kernel.signal_variance)?.lower();
        let mut rng = rng_from(seed, &[TAG_SURFACE, region.id as u64]);
        let z = DVector::from_fn(members.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
        let draw = l * z;
        for (k, &i) in members.iter().enumerate() {
            values[i] = region.mean + draw[k];
        }
    }
    Ok(values)
}

/// Noiseless truth on the inclusive 41 x 41 grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthGrid {
    pub points: Vec<[f64; 2]>,
    pub f_true: Vec<f64>,
    pub region_id: Vec<usize>,
    pub boundary_dist: Vec<f64>,
}

impl TruthGrid {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub train: Dataset,
    /// Noiseless surface values at the training inputs.
    pub train_truth: Vec<f64>,
    pub grid: TruthGrid,
}

pub fn grid_points() -> Vec<[f64; 2]> {
    let step = (DOMAIN_HI - DOMAIN_LO) / (GRID_SIDE - 1) as f64;
    let coord = |i: usize| if i == GRID_SIDE - 1 { DOMAIN_HI } else { DOMAIN_LO + step * i as f64 };
    (0..GRID_SIDE)
        .flat_map(|i| (0..GRID_SIDE).map(move |j| [coord(i), coord(j)]))
        .collect()
}

/// Training inputs, training responses and the truth grid from one joint
/// surface draw. The surface depends on `(case, n, seed)` only, so changing
/// the noise level keeps the same underlying realization.
pub fn generate(case: &SimCase, n: usize, noise_var: f64, seed: u64) -> Result<Generated> {
    if n == 0 {
        return Err(Error::InvalidParameter("training set size must be positive".into()));
    }
    if !(noise_var >= 0.0) || !noise_var.is_finite() {
        return Err(Error::InvalidParameter(format!("noise variance {noise_var}")));
    }
    let mut rng = rng_from(seed, &[TAG_INPUTS]);
    let inputs: Vec<[f64; 2]> = (0..n)
        .map(|_| {
            [
                rng.random_range(DOMAIN_LO..DOMAIN_HI),
                rng.random_range(DOMAIN_LO..DOMAIN_HI),
            ]
        })
        .collect();
    let grid = grid_points();
    let mut all = inputs.clone();
    all.extend_from_slice(&grid);
    let surface = sample_surface(case, &all, seed)?;
    let (train_truth, grid_truth) = surface.split_at(n);

    let mut noise_rng = rng_from(seed, &[TAG_NOISE]);
    let sd = noise_var.sqrt();
    let responses: Vec<f64> = train_truth
        .iter()
        .map(|f| f + sd * noise_rng.sample::<f64, _>(StandardNormal))
        .collect();
    let train = Dataset::new(inputs.iter().map(|p| p.to_vec()).collect(), responses)?;

    let geometry = BoundaryGeometry::new(case.id);
    let region_id = grid.iter().map(|p| region_of(case, p)).collect::<Result<_>>()?;
    let boundary_dist = grid.iter().map(|p| geometry.distance(p)).collect::<Result<_>>()?;
    Ok(Generated {
        train,
        train_truth: train_truth.to_vec(),
        grid: TruthGrid {
            points: grid,
            f_true: grid_truth.to_vec(),
            region_id,
            boundary_dist,
        },
    })
}

pub fn make_training_set(case: &SimCase, n: usize, noise_var: f64, seed: u64) -> Result<Dataset> {
    Ok(generate(case, n, noise_var, seed)?.train)
}

/// The truth grid paired with the training set drawn from the same `(case, n, seed)`.
pub fn make_test_grid(case: &SimCase, n: usize, seed: u64) -> Result<TruthGrid> {
    Ok(generate(case, n, 0.0, seed)?.grid)
}
