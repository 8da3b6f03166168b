//! Space files, tree documents and run reports.
//!
//! A space file is plain text:
//!
//! ```text
//! # comments and blank lines are ignored
//! n=3
//! 0
//! 1,0
//! 2,1,0
//! weights: 0.25,0.25,0.5
//! ```
//!
//! Each row holds either all `n` distances or the lower triangle up to and
//! including the diagonal (mirrored on load). Without the `n=` header the
//! number of rows decides `n`. Numbers are written in the shortest form that
//! parses back to the same `f64`.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::metric::{computed_table_tolerance, validate_with_tolerance, FiniteMetricSpace, PointMeasure};
use crate::nearly::ScaleSchedule;
use crate::report::Check;
use crate::skeleton::{NodeId, SkeletonTree};

/// Renders a space (and optionally its weights) as a full-table space file.
pub fn write_space(space: &FiniteMetricSpace, mu: Option<&PointMeasure>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "n={}", space.len());
    for i in 0..space.len() {
        let row: Vec<String> = space.row(i).iter().map(|d| d.to_string()).collect();
        let _ = writeln!(out, "{}", row.join(","));
    }
    if let Some(mu) = mu {
        let w: Vec<String> = mu.weights().iter().map(|w| w.to_string()).collect();
        let _ = writeln!(out, "weights: {}", w.join(","));
    }
    out
}

fn parse_error(line: usize, field: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        field,
        message: message.into(),
    }
}

fn parse_numbers(text: &str, line: usize) -> Result<Vec<f64>> {
    text.split(',')
        .enumerate()
        .map(|(k, f)| {
            let f = f.trim();
            let v: f64 = f
                .parse()
                .map_err(|_| parse_error(line, k + 1, format!("not a number: {f:?}")))?;
            if !v.is_finite() {
                return Err(parse_error(line, k + 1, format!("not finite: {f:?}")));
            }
            Ok(v)
        })
        .collect()
}

/// Parses a space file without checking the metric axioms.
pub fn parse_space_unchecked(text: &str) -> Result<(FiniteMetricSpace, Option<PointMeasure>)> {
    let mut declared: Option<usize> = None;
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut weights: Option<(usize, Vec<f64>)> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if weights.is_some() {
            return Err(parse_error(line_no, 1, "unexpected content after the weights line"));
        }
        if let Some(rest) = line.strip_prefix("n=") {
            if declared.is_some() || !rows.is_empty() {
                return Err(parse_error(line_no, 1, "the n= header must come first"));
            }
            let n = rest
                .trim()
                .parse::<usize>()
                .map_err(|_| parse_error(line_no, 1, format!("bad point count {:?}", rest.trim())))?;
            declared = Some(n);
        } else if let Some(rest) = line.strip_prefix("weights:") {
            weights = Some((line_no, parse_numbers(rest, line_no)?));
        } else {
            rows.push((line_no, parse_numbers(line, line_no)?));
        }
    }
    let n = declared.unwrap_or(rows.len());
    if rows.len() != n {
        let line = rows.last().map_or(1, |r| r.0);
        return Err(parse_error(line, 1, format!("expected {n} rows, found {}", rows.len())));
    }
    let mut dist = vec![f64::NAN; n * n];
    for (i, (line_no, row)) in rows.iter().enumerate() {
        if row.len() == n {
            dist[i * n..(i + 1) * n].copy_from_slice(row);
        } else if row.len() == i + 1 {
            for (j, &d) in row.iter().enumerate() {
                let mirrored = dist[j * n + i];
                if !mirrored.is_nan() && mirrored != d {
                    return Err(parse_error(*line_no, j + 1, format!("disagrees with row {j}")));
                }
                dist[i * n + j] = d;
                dist[j * n + i] = d;
            }
        } else {
            return Err(parse_error(
                *line_no,
                row.len().min(n) + 1,
                format!("row {i} has {} fields, expected {n} or {}", row.len(), i + 1),
            ));
        }
    }
    // A lower-triangle file's last row is indistinguishable from a full row.
    for i in 0..n {
        for j in 0..n {
            if dist[i * n + j].is_nan() {
                dist[i * n + j] = dist[j * n + i];
            }
        }
    }
    let space = FiniteMetricSpace::from_flat(n, dist)?;
    let mu = match weights {
        None => None,
        Some((line_no, w)) => {
            if w.len() != n {
                return Err(parse_error(line_no, w.len().min(n) + 1, format!("expected {n} weights, found {}", w.len())));
            }
            if let Some(k) = w.iter().position(|&x| x < 0.0) {
                return Err(parse_error(line_no, k + 1, "negative weight"));
            }
            Some(PointMeasure::new(w)?)
        }
    };
    Ok((space, mu))
}

/// Parses a space file and rejects tables that are not metrics.
pub fn parse_space(text: &str) -> Result<(FiniteMetricSpace, Option<PointMeasure>)> {
    let (space, mu) = parse_space_unchecked(text)?;
    let violations = validate_with_tolerance(&space, computed_table_tolerance(&space));
    if !violations.is_empty() {
        return Err(Error::InvalidSpace(violations));
    }
    Ok((space, mu))
}

pub fn save_space(path: impl AsRef<Path>, space: &FiniteMetricSpace, mu: Option<&PointMeasure>) -> Result<()> {
    std::fs::write(path, write_space(space, mu))?;
    Ok(())
}

pub fn load_space(path: impl AsRef<Path>) -> Result<(FiniteMetricSpace, Option<PointMeasure>)> {
    parse_space(&std::fs::read_to_string(path)?)
}

/// Hex SHA-256 of the given bytes.
pub fn digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeKind {
    Skeleton,
    Nearly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeafEntry {
    pub point: usize,
    pub leaf: NodeId,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NuEntry {
    pub point: usize,
    pub mass: f64,
}

/// Everything needed to re-verify a tree against its input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeDocument {
    pub kind: TreeKind,
    pub input_digest: String,
    /// Fixed split parameter (skeleton trees).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    /// Distances were multiplied by `alpha` before building (nearly trees).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<ScaleSchedule>,
    pub tree: SkeletonTree,
    pub leaf_table: Vec<LeafEntry>,
    pub nu: Vec<NuEntry>,
}

impl TreeDocument {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunParameters {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    /// `t(i)` for `i = 1, 2, ...`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Vec<usize>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunOutputs {
    pub n_points: usize,
    pub skeleton_size: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distortion: Option<f64>,
    /// `mu(U)`.
    pub mass_retained: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_hat: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frostman_exponent: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nearly_lipschitz_constant: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub input_digest: String,
    pub parameters: RunParameters,
    pub outputs: RunOutputs,
    /// Sorted by name.
    pub checks: Vec<Check>,
    pub all_pass: bool,
    /// Wall-clock time; not covered by the determinism contract.
    pub timing_ms: f64,
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "command: {}", self.command);
        let _ = writeln!(out, "input_digest: {}", self.input_digest);
        let p = &self.parameters;
        if let Some(t) = p.t {
            let _ = writeln!(out, "t: {t}");
        }
        if let Some(e) = p.epsilon {
            let _ = writeln!(out, "epsilon: {e}");
        }
        if let Some(b) = p.beta {
            let _ = writeln!(out, "beta: {b}");
        }
        if let Some(s) = &p.schedule {
            let _ = writeln!(out, "schedule: {s:?}");
        }
        let o = &self.outputs;
        let _ = writeln!(out, "points: {}", o.n_points);
        let _ = writeln!(out, "skeleton_size: {}", o.skeleton_size);
        let _ = writeln!(out, "mass_retained: {}", o.mass_retained);
        let optional = [
            ("distortion", o.distortion),
            ("lambda_hat", o.lambda_hat.map(|l| l as f64)),
            ("frostman_exponent", o.frostman_exponent),
            ("alpha", o.alpha),
            ("nearly_lipschitz_constant", o.nearly_lipschitz_constant),
        ];
        for (name, value) in optional {
            if let Some(v) = value {
                let _ = writeln!(out, "{name}: {v}");
            }
        }
        for c in &self.checks {
            let status = if c.pass { "PASS" } else { "FAIL" };
            let slack = c.worst_slack.map_or(String::from("-"), |s| s.to_string());
            let _ = write!(out, "check {}: {status} (evaluated {}, worst_slack {slack})", c.name, c.evaluated);
            if let Some(d) = &c.detail {
                let _ = write!(out, " {d}");
            }
            out.push('\n');
        }
        let _ = writeln!(out, "all_pass: {}", self.all_pass);
        let _ = writeln!(out, "timing_ms: {}", self.timing_ms);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{generate, GridMetric, InstanceKind, InstanceSpec};

    #[test]
    fn lower_triangle_and_weights() {
        let text = "# tiny\nn=3\n0\n1,0\n2,1,0\nweights: 0.25, 0.25, 0.5\n";
        let (s, mu) = parse_space(text).unwrap();
        assert_eq!(s.dist(0, 2), 2.0);
        assert_eq!(s.dist(2, 0), 2.0);
        assert_eq!(mu.unwrap().weights(), &[0.25, 0.25, 0.5]);
    }

    #[test]
    fn bare_csv_without_header() {
        let (s, mu) = parse_space("0,3\n3,0\n").unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.dist(0, 1), 3.0);
        assert!(mu.is_none());
    }

    #[test]
    fn parse_errors_carry_location() {
        match parse_space("n=2\n0,1\n1,x\n") {
            Err(Error::Parse { line, field, .. }) => assert_eq!((line, field), (3, 2)),
            other => panic!("{other:?}"),
        }
        match parse_space("n=3\n0\n1,0\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        match parse_space("n=2\n0\n1,0,4\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        match parse_space("n=2\n0\n1,0\nweights: 1\n") {
            Err(Error::Parse { line, field, .. }) => assert_eq!((line, field), (4, 2)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn triangle_violations_are_rejected() {
        assert!(matches!(parse_space("n=3\n0\n1,0\n5,1,0\n"), Err(Error::InvalidSpace(_))));
    }

    #[test]
    fn round_trips_are_bit_exact() {
        for spec in [
            InstanceSpec::cantor(3, 1.0 / 3.0),
            InstanceSpec::new(InstanceKind::Grid {
                dim: 2,
                side: 4,
                metric: GridMetric::Euclidean,
            }),
            InstanceSpec::snowflake(0.5, InstanceSpec::random_doubling(3)),
        ] {
            let (s, mu) = generate(&spec).unwrap();
            let text = write_space(&s, Some(&mu));
            let (s2, mu2) = parse_space(&text).unwrap();
            assert_eq!(s, s2);
            assert_eq!(mu2.as_ref().unwrap(), &mu);
            assert_eq!(write_space(&s2, mu2.as_ref()), text);
        }
    }
}
