//! Diagonal-norm SBP operators `D = P⁻¹Q` exact on a function space.
//!
//! Given a positive rule exact on `(FF)'`, `P = diag(w)` and `Q = Q_A + B/2`
//! where the antisymmetric `Q_A` solves `Q_A F = P F_x - B F / 2`. The
//! strictly lower triangle of `Q_A` is the unknown vector; the minimum-norm
//! least-squares solution is taken when the system is underdetermined.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::basis::{self, make_space, FunctionSpace, Interval, SpaceKind};
use crate::error::{FsbpError, Result};
use crate::linalg;
use crate::quadrature::{verify_exactness, ExactnessReport, QuadratureRule};

pub const ANTISYMMETRY_TOL: f64 = 1e-12;
pub const EXACTNESS_TOL: f64 = 1e-8;
pub const D_ONE_TOL: f64 = 1e-10;
pub const CONSISTENCY_TOL: f64 = 1e-13;
const SYSTEM_TOL: f64 = 1e-10;
const SYSTEM_CUTOFF: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct FsbpOperator {
    space: FunctionSpace,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    q: DMatrix<f64>,
    d: DMatrix<f64>,
}

impl FsbpOperator {
    pub fn space(&self) -> &FunctionSpace {
        &self.space
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn interval(&self) -> Interval {
        self.space.interval()
    }

    /// `B = diag(-1, 0, …, 0, 1)`.
    pub fn boundary_matrix(&self) -> DMatrix<f64> {
        boundary_matrix(self.len())
    }

    /// The weights as a quadrature rule.
    pub fn norm_rule(&self) -> QuadratureRule {
        QuadratureRule {
            nodes: self.nodes.clone(),
            weights: self.weights.clone(),
            space_label: self.space.label(),
            exactness_residual: None,
        }
    }

    /// `D u`.
    pub fn apply(&self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.len() {
            return Err(FsbpError::LengthMismatch {
                expected: self.len(),
                got: u.len(),
            });
        }
        let mut out = vec![0.0; u.len()];
        self.apply_into(u, &mut out);
        Ok(out)
    }

    /// `out = D u` without length checks.
    pub(crate) fn apply_into(&self, u: &[f64], out: &mut [f64]) {
        let n = self.len();
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for j in 0..n {
                acc += self.d[(i, j)] * u[j];
            }
            *o = acc;
        }
    }

    /// Maps the operator affinely onto `block`: nodes follow the map, the
    /// weights scale with the length ratio, `Q` is unchanged and `D` scales
    /// inversely. The result is exact for the mapped space.
    pub fn map_to(&self, block: Interval) -> FsbpOperator {
        let from = self.interval();
        let scale = block.length() / from.length();
        let mut nodes: Vec<f64> = self.nodes.iter().map(|&x| from.map_to(&block, x)).collect();
        // Endpoints exactly, so neighbouring blocks share interface nodes.
        let last = nodes.len() - 1;
        nodes[0] = block.left();
        nodes[last] = block.right();
        FsbpOperator {
            space: self.space.mapped_to(block),
            nodes,
            weights: self.weights.iter().map(|w| w * scale).collect(),
            q: self.q.clone(),
            d: &self.d / scale,
        }
    }

    /// Replaces `Q` (and `D` consistently). Intended for diagnostics tests
    /// that need a deliberately broken operator.
    #[doc(hidden)]
    pub fn with_matrices(mut self, q: DMatrix<f64>, d: DMatrix<f64>) -> Self {
        self.q = q;
        self.d = d;
        self
    }
}

fn boundary_matrix(n: usize) -> DMatrix<f64> {
    let mut b = DMatrix::zeros(n, n);
    b[(0, 0)] = -1.0;
    b[(n - 1, n - 1)] += 1.0;
    b
}

/// Index of `(Q_A)_{ij}`, `i > j`, in the unknown vector.
fn lower_index(i: usize, j: usize) -> usize {
    i * (i - 1) / 2 + j
}

/// Assembles the operator from a space and a positive `(FF)'`-exact rule.
pub fn build_operator(space: &FunctionSpace, rule: &QuadratureRule) -> Result<FsbpOperator> {
    let n = rule.len();
    let k_dim = space.dim();
    if n < 2 {
        return Err(FsbpError::InvalidArgument(
            "an operator needs at least two nodes".to_string(),
        ));
    }
    let report = verify_exactness(rule, space);
    if !report.positive {
        return Err(FsbpError::InvalidArgument(
            "quadrature weights must be positive".to_string(),
        ));
    }
    if !report.exact() {
        return Err(FsbpError::RuleNotExact {
            residual: report.max_residual,
        });
    }
    let iv = space.interval();
    let scale = 1e-12 * iv.length();
    if (rule.nodes[0] - iv.left()).abs() > scale || (rule.nodes[n - 1] - iv.right()).abs() > scale {
        return Err(FsbpError::InvalidArgument(
            "rule nodes must start and end at the interval endpoints".to_string(),
        ));
    }
    if rule.nodes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(FsbpError::InvalidArgument(
            "rule nodes must be strictly increasing".to_string(),
        ));
    }
    let rank = basis::unisolvency_rank(space, &rule.nodes)?;
    if rank < k_dim {
        return Err(FsbpError::NotUnisolvent { rank, dim: k_dim });
    }

    // Assemble in the working basis with every exactness column scaled to
    // unit size. Row scaling leaves the exact solution set unchanged.
    let f = basis::sample(space.working_basis(), &rule.nodes, false);
    let fx = basis::sample(space.working_basis(), &rule.nodes, true);
    let b = boundary_matrix(n);
    let unknowns = n * (n - 1) / 2;
    let mut a = DMatrix::zeros(n * k_dim, unknowns);
    let mut y = DVector::zeros(n * k_dim);
    for k in 0..k_dim {
        let rhs: Vec<f64> = (0..n)
            .map(|r| rule.weights[r] * fx[(r, k)] - 0.5 * b[(r, r)] * f[(r, k)])
            .collect();
        let col_scale = (0..n)
            .map(|r| f[(r, k)].abs().max(rhs[r].abs()))
            .fold(0.0, f64::max);
        let s = if col_scale > 0.0 { 1.0 / col_scale } else { 1.0 };
        for r in 0..n {
            let row = k * n + r;
            y[row] = s * rhs[r];
            for j in 0..r {
                a[(row, lower_index(r, j))] += s * f[(j, k)];
            }
            for j in (r + 1)..n {
                a[(row, lower_index(j, r))] -= s * f[(j, k)];
            }
        }
    }

    let q_vec = linalg::min_norm_solve(&a, &y, SYSTEM_CUTOFF)?;
    let residual = (&a * &q_vec - &y).amax();
    if residual > SYSTEM_TOL {
        return Err(FsbpError::OperatorResidual { residual });
    }

    let mut q = b.clone() * 0.5;
    for i in 1..n {
        for j in 0..i {
            let v = q_vec[lower_index(i, j)];
            q[(i, j)] += v;
            q[(j, i)] -= v;
        }
    }
    let d = DMatrix::from_fn(n, n, |i, j| q[(i, j)] / rule.weights[i]);
    Ok(FsbpOperator {
        space: space.clone(),
        nodes: rule.nodes.clone(),
        weights: rule.weights.clone(),
        q,
        d,
    })
}

/// Diagnostics of the SBP axioms for an operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SbpReport {
    /// `max |D F - F_x| / max(1, max |F_x|)` over the declared basis.
    pub exactness_residual: f64,
    /// `max |Q + Qᵀ - B|`.
    pub antisymmetry_residual: f64,
    pub min_weight: f64,
    /// `max |D 1| / max(1, max |D|)`.
    pub d_one_residual: f64,
    /// `max |D - P⁻¹Q| / max(1, |D|)`.
    pub consistency_residual: f64,
    pub contains_constants: bool,
}

impl SbpReport {
    /// Human-readable descriptions of every violated property.
    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.exactness_residual <= EXACTNESS_TOL) {
            out.push(format!(
                "accuracy: D does not differentiate the basis exactly (max |DF - F_x| = {:e})",
                self.exactness_residual
            ));
        }
        if !(self.min_weight > 0.0) {
            out.push(format!(
                "norm: P is not positive definite (minimum weight {:e})",
                self.min_weight
            ));
        }
        if !(self.antisymmetry_residual <= ANTISYMMETRY_TOL) {
            out.push(format!(
                "summation by parts: Q + Q^T != B (max deviation {:e})",
                self.antisymmetry_residual
            ));
        }
        if self.contains_constants && !(self.d_one_residual <= D_ONE_TOL) {
            out.push(format!(
                "conservation: D does not annihilate constants (max |D1| = {:e})",
                self.d_one_residual
            ));
        }
        if !(self.consistency_residual <= CONSISTENCY_TOL) {
            out.push(format!(
                "consistency: D != P^-1 Q (relative deviation {:e})",
                self.consistency_residual
            ));
        }
        out
    }

    pub fn passed(&self) -> bool {
        self.failures().is_empty()
    }
}

pub fn verify_sbp(op: &FsbpOperator) -> SbpReport {
    let n = op.len();
    let f = basis::sample(op.space.basis(), &op.nodes, false);
    let fx = basis::sample(op.space.basis(), &op.nodes, true);
    let exactness_residual = (&op.d * &f - &fx).amax() / fx.amax().max(1.0);
    let antisymmetry_residual = (&op.q + op.q.transpose() - boundary_matrix(n)).amax();
    let min_weight = op.weights.iter().copied().fold(f64::INFINITY, f64::min);
    let d_one_residual = op.d.column_sum().amax() / op.d.amax().max(1.0);
    let mut consistency_residual: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let dij = op.d[(i, j)];
            let dev = (dij - op.q[(i, j)] / op.weights[i]).abs() / dij.abs().max(1.0);
            consistency_residual = consistency_residual.max(dev);
        }
    }
    let nan_to_inf = |v: f64| if v.is_nan() { f64::INFINITY } else { v };
    SbpReport {
        exactness_residual: nan_to_inf(exactness_residual),
        antisymmetry_residual: nan_to_inf(antisymmetry_residual),
        min_weight: if min_weight.is_nan() { f64::NEG_INFINITY } else { min_weight },
        d_one_residual: nan_to_inf(d_one_residual),
        consistency_residual: nan_to_inf(consistency_residual),
        contains_constants: op.space.contains_constants(),
    }
}

/// Exactness of the operator's own weights on `(FF)'`.
pub fn verify_norm_rule(op: &FsbpOperator) -> ExactnessReport {
    verify_exactness(&op.norm_rule(), &op.space)
}

/// Real number printed with 17 significant digits.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Sig17(f64);

impl Serialize for Sig17 {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        if !self.0.is_finite() {
            return Err(serde::ser::Error::custom("non-finite value in operator"));
        }
        let raw = serde_json::value::RawValue::from_string(format!("{:.16e}", self.0))
            .map_err(serde::ser::Error::custom)?;
        raw.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Sig17 {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let v = f64::deserialize(deserializer)?;
        if v.is_finite() {
            Ok(Sig17(v))
        } else {
            Err(D::Error::custom("non-finite value"))
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OperatorFile {
    space: String,
    domain: [Sig17; 2],
    nodes: Vec<Sig17>,
    weights: Vec<Sig17>,
    #[serde(rename = "Q")]
    q: Vec<Vec<Sig17>>,
    #[serde(rename = "D")]
    d: Vec<Vec<Sig17>>,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<Sig17>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| Sig17(m[(i, j)])).collect())
        .collect()
}

fn matrix_from(rows: &[Vec<Sig17>], n: usize, name: &str) -> Result<DMatrix<f64>> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(FsbpError::Format(format!("{name} must be {n}x{n}")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j].0))
}

/// Serializes the operator as a single JSON object.
pub fn to_json(op: &FsbpOperator) -> Result<String> {
    let iv = op.interval();
    let file = OperatorFile {
        space: op.space.label(),
        domain: [Sig17(iv.left()), Sig17(iv.right())],
        nodes: op.nodes.iter().map(|&x| Sig17(x)).collect(),
        weights: op.weights.iter().map(|&x| Sig17(x)).collect(),
        q: rows_of(&op.q),
        d: rows_of(&op.d),
    };
    serde_json::to_string_pretty(&file).map_err(|e| FsbpError::Format(e.to_string()))
}

/// Parses an operator file without checking the SBP axioms.
pub fn from_json_unchecked(text: &str) -> Result<FsbpOperator> {
    let file: OperatorFile =
        serde_json::from_str(text).map_err(|e| FsbpError::Format(e.to_string()))?;
    let kind: SpaceKind = file.space.parse()?;
    let interval = Interval::new(file.domain[0].0, file.domain[1].0)?;
    let space = make_space(kind, interval)?;
    let n = file.nodes.len();
    if n < 2 || file.weights.len() != n {
        return Err(FsbpError::Format(
            "nodes and weights must have the same length >= 2".to_string(),
        ));
    }
    let nodes: Vec<f64> = file.nodes.iter().map(|v| v.0).collect();
    if let Some(&node) = nodes.iter().find(|&&x| !interval.contains(x)) {
        return Err(FsbpError::NodeOutsideInterval {
            node,
            left: interval.left(),
            right: interval.right(),
        });
    }
    Ok(FsbpOperator {
        space,
        nodes,
        weights: file.weights.iter().map(|v| v.0).collect(),
        q: matrix_from(&file.q, n, "Q")?,
        d: matrix_from(&file.d, n, "D")?,
    })
}

/// Parses an operator file and rejects it unless every SBP property holds
/// and the stored weights are a positive `(FF)'`-exact rule.
pub fn from_json(text: &str) -> Result<FsbpOperator> {
    let op = from_json_unchecked(text)?;
    let mut failures = verify_sbp(&op).failures();
    let rule = verify_norm_rule(&op);
    if !rule.exact() {
        failures.push(format!(
            "weights are not exact on the derivative-of-products space (residual {:e})",
            rule.max_residual
        ));
    }
    if failures.is_empty() {
        Ok(op)
    } else {
        Err(FsbpError::Verification(failures.join("; ")))
    }
}

pub fn write_operator_file(op: &FsbpOperator, path: &Path) -> Result<()> {
    let mut text = to_json(op)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_operator_file(path: &Path) -> Result<FsbpOperator> {
    from_json(&fs::read_to_string(path)?)
}
