//! Deterministic test instances: Cantor sets, grids, random doubling sets,
//! snowflakes of any of these, and literal distance matrices.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{validate_with_tolerance, FiniteMetricSpace, PointMeasure};

/// Triangle-inequality slack allowed on generated tables.
pub const GENERATED_TOLERANCE: f64 = 1e-12;

/// Largest generated instance (the table is dense).
pub const MAX_GENERATED_POINTS: usize = 4096;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridMetric {
    #[default]
    Euclidean,
    Max,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InstanceKind {
    /// Left endpoints of the level-`level` intervals of the Cantor
    /// construction with contraction `ratio` on `[0, 1]`.
    Cantor { level: u32, ratio: f64 },
    /// `side^dim` lattice points with unit spacing.
    Grid {
        dim: u32,
        side: usize,
        #[serde(default)]
        metric: GridMetric,
    },
    /// `branching^depth` points: each level displaces every point's children
    /// by uniform offsets in `[-ratio^l, ratio^l]^dim`.
    RandomDoubling {
        seed: u64,
        depth: u32,
        branching: usize,
        dim: usize,
        ratio: f64,
    },
    /// `d^exponent` over a base instance.
    Snowflake { exponent: f64, base: Box<InstanceSpec> },
    Matrix { rows: Vec<Vec<f64>> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MeasureSpec {
    Uniform,
    Weights { weights: Vec<f64> },
    /// Cantor only: branch probabilities `[left, right]` at every level.
    SelfSimilar { branch: [f64; 2] },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    #[serde(flatten)]
    pub kind: InstanceKind,
    /// Defaults to uniform; a snowflake without one inherits its base measure.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measure: Option<MeasureSpec>,
}

impl InstanceSpec {
    pub fn new(kind: InstanceKind) -> Self {
        Self { kind, measure: None }
    }

    pub fn cantor(level: u32, ratio: f64) -> Self {
        Self::new(InstanceKind::Cantor { level, ratio })
    }

    pub fn grid(dim: u32, side: usize) -> Self {
        Self::new(InstanceKind::Grid {
            dim,
            side,
            metric: GridMetric::Euclidean,
        })
    }

    pub fn random_doubling(seed: u64) -> Self {
        Self::new(InstanceKind::RandomDoubling {
            seed,
            depth: 4,
            branching: 3,
            dim: 2,
            ratio: 0.25,
        })
    }

    pub fn snowflake(exponent: f64, base: InstanceSpec) -> Self {
        Self::new(InstanceKind::Snowflake {
            exponent,
            base: Box::new(base),
        })
    }

    pub fn with_measure(mut self, measure: MeasureSpec) -> Self {
        self.measure = Some(measure);
        self
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

fn check_size(n: f64) -> Result<usize> {
    if n > MAX_GENERATED_POINTS as f64 {
        return Err(invalid(format!(
            "instance would have {n} points, more than {MAX_GENERATED_POINTS}"
        )));
    }
    Ok(n as usize)
}

/// `Some(q)` when `ratio` is exactly `1 / q` in binary64 and `q^level` is an
/// exact integer.
fn integer_reciprocal(ratio: f64, level: u32) -> Option<u64> {
    let q = (1.0 / ratio).round();
    let exact = q >= 2.0 && 1.0 / q == ratio && q.powi(level as i32) <= 2f64.powi(53);
    exact.then_some(q as u64)
}

/// Branch digits of every Cantor point, most significant first.
fn cantor_digits(level: u32) -> impl Iterator<Item = Vec<u8>> {
    (0u64..1 << level).map(move |code| (0..level).map(|j| ((code >> (level - 1 - j)) & 1) as u8).collect())
}

/// Cantor coordinates, exact integers scaled by `q^level` when the ratio is `1/q`.
pub fn cantor_points(level: u32, ratio: f64) -> Result<Vec<f64>> {
    if !(ratio > 0.0 && ratio <= 0.5) {
        return Err(invalid(format!("cantor ratio must lie in (0, 1/2], got {ratio}")));
    }
    check_size(2f64.powi(level as i32))?;
    if let Some(q) = integer_reciprocal(ratio, level) {
        let scale = (q as f64).powi(level as i32);
        return Ok(cantor_digits(level)
            .map(|digits| {
                let m = digits
                    .iter()
                    .fold(0u64, |acc, &b| acc * q + b as u64 * (q - 1));
                m as f64 / scale
            })
            .collect());
    }
    Ok(cantor_digits(level)
        .map(|digits| {
            let mut x = 0.0;
            let mut width = 1.0;
            for b in digits {
                if b == 1 {
                    x += width * (1.0 - ratio);
                }
                width *= ratio;
            }
            x
        })
        .collect())
}

fn cantor_space(level: u32, ratio: f64) -> Result<FiniteMetricSpace> {
    let xs = cantor_points(level, ratio)?;
    if let Some(q) = integer_reciprocal(ratio, level) {
        // Distances from integer numerators are correctly rounded.
        let scale = (q as f64).powi(level as i32);
        let ms: Vec<f64> = xs.iter().map(|x| (x * scale).round()).collect();
        return FiniteMetricSpace::from_fn(xs.len(), |i, j| (ms[j] - ms[i]).abs() / scale);
    }
    FiniteMetricSpace::from_fn(xs.len(), |i, j| (xs[j] - xs[i]).abs())
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn grid_space(dim: u32, side: usize, metric: GridMetric) -> Result<FiniteMetricSpace> {
    if dim == 0 || side == 0 {
        return Err(invalid("grid needs dim >= 1 and side >= 1"));
    }
    let n = check_size((side as f64).powi(dim as i32))?;
    let coords: Vec<Vec<f64>> = (0..n)
        .map(|mut k| {
            let mut c = vec![0.0; dim as usize];
            for slot in c.iter_mut().rev() {
                *slot = (k % side) as f64;
                k /= side;
            }
            c
        })
        .collect();
    FiniteMetricSpace::from_fn(n, |i, j| match metric {
        GridMetric::Euclidean => euclidean(&coords[i], &coords[j]),
        GridMetric::Max => coords[i]
            .iter()
            .zip(&coords[j])
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max),
    })
}

fn random_doubling_space(seed: u64, depth: u32, branching: usize, dim: usize, ratio: f64) -> Result<FiniteMetricSpace> {
    if branching == 0 || dim == 0 {
        return Err(invalid("random_doubling needs branching >= 1 and dim >= 1"));
    }
    if !(ratio > 0.0 && ratio <= 0.5) {
        return Err(invalid(format!("random_doubling ratio must lie in (0, 1/2], got {ratio}")));
    }
    check_size((branching as f64).powi(depth as i32))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = vec![vec![0.0; dim]];
    let mut scale = 1.0;
    for _ in 0..depth {
        scale *= ratio;
        let mut next = Vec::with_capacity(points.len() * branching);
        for p in &points {
            for _ in 0..branching {
                next.push(p.iter().map(|&c| c + scale * rng.gen_range(-1.0..=1.0)).collect::<Vec<f64>>());
            }
        }
        points = next;
    }
    FiniteMetricSpace::from_fn(points.len(), |i, j| euclidean(&points[i], &points[j]))
}

fn cantor_self_similar(level: u32, branch: [f64; 2]) -> Result<PointMeasure> {
    let [a, b] = branch;
    if !(a >= 0.0 && b >= 0.0) || ((a + b) - 1.0).abs() > 1e-12 {
        return Err(invalid(format!(
            "self-similar branch weights must be nonnegative and sum to 1, got {branch:?}"
        )));
    }
    PointMeasure::new(
        cantor_digits(level)
            .map(|d| d.iter().map(|&x| branch[x as usize]).product())
            .collect(),
    )
}

fn build_measure(spec: &InstanceSpec, n: usize, inherited: Option<PointMeasure>) -> Result<PointMeasure> {
    match (&spec.measure, inherited) {
        (None, Some(m)) => Ok(m),
        (None, None) | (Some(MeasureSpec::Uniform), _) => Ok(PointMeasure::uniform(n)),
        (Some(MeasureSpec::Weights { weights }), _) => {
            if weights.len() != n {
                return Err(invalid(format!("{} weights for {n} points", weights.len())));
            }
            PointMeasure::new(weights.clone())
        }
        (Some(MeasureSpec::SelfSimilar { branch }), _) => match spec.kind {
            InstanceKind::Cantor { level, .. } => cantor_self_similar(level, *branch),
            _ => Err(invalid("self-similar weights are only defined for cantor instances")),
        },
    }
}

/// Builds the instance and checks it is a metric (up to
/// [`GENERATED_TOLERANCE`]).
pub fn generate(spec: &InstanceSpec) -> Result<(FiniteMetricSpace, PointMeasure)> {
    let (space, inherited) = match &spec.kind {
        InstanceKind::Cantor { level, ratio } => (cantor_space(*level, *ratio)?, None),
        InstanceKind::Grid { dim, side, metric } => (grid_space(*dim, *side, *metric)?, None),
        InstanceKind::RandomDoubling {
            seed,
            depth,
            branching,
            dim,
            ratio,
        } => (random_doubling_space(*seed, *depth, *branching, *dim, *ratio)?, None),
        InstanceKind::Snowflake { exponent, base } => {
            if !(*exponent > 0.0 && *exponent <= 1.0) {
                return Err(invalid(format!("snowflake exponent must lie in (0, 1], got {exponent}")));
            }
            let (s, m) = generate(base)?;
            let e = *exponent;
            (s.map_distances(|d| if e == 0.5 { d.sqrt() } else { d.powf(e) })?, Some(m))
        }
        InstanceKind::Matrix { rows } => (FiniteMetricSpace::from_rows(rows)?, None),
    };
    let violations = validate_with_tolerance(&space, GENERATED_TOLERANCE);
    if !violations.is_empty() {
        return Err(Error::InvalidSpace(violations));
    }
    let mu = build_measure(spec, space.len(), inherited)?;
    Ok((space, mu))
}
