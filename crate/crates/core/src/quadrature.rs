//! Positive quadrature rules exact on the derivative-of-products space
//! `(FF)' = {(fg)' : f, g ∈ F}`.
//!
//! A diagonal-norm SBP operator for `F` exists on a grid exactly when such a
//! rule exists there, so these rules are the first stage of every build.

use nalgebra::DVector;

use crate::basis::{self, FunctionSpace, Interval, SpaceKind};
use crate::error::{FsbpError, Result};
use crate::linalg;

/// Relative exactness tolerance: `|Σ w (f_k f_l)' - moment| <= TOL·max(1, |moment|)`.
pub const EXACTNESS_TOL: f64 = 1e-10;

const CONSTRAINT_CUTOFF: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// Space whose `(FF)'` the rule was checked against, or the rule family
    /// when it was built without one.
    pub space_label: String,
    /// Largest normalized constraint violation measured when the rule was
    /// tagged with a space.
    pub exactness_residual: Option<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn is_positive(&self) -> bool {
        self.weights.iter().all(|&w| w > 0.0)
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    fn tagged(mut self, space: &FunctionSpace) -> Self {
        self.exactness_residual = Some(verify_exactness(&self, space).max_residual);
        self.space_label = space.label();
        self
    }
}

/// Outcome of checking a rule against a space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactnessReport {
    /// `max_{k<=l} |Σ w (f_k f_l)'(x) - moment| / max(1, |moment|)`.
    pub max_residual: f64,
    pub positive: bool,
}

impl ExactnessReport {
    pub fn exact(&self) -> bool {
        self.max_residual <= EXACTNESS_TOL
    }

    pub fn passed(&self) -> bool {
        self.exact() && self.positive
    }
}

pub fn verify_exactness(rule: &QuadratureRule, space: &FunctionSpace) -> ExactnessReport {
    let (rows, moments) = basis::pair_system(space.basis(), space.interval(), &rule.nodes);
    let w = DVector::from_column_slice(&rule.weights);
    let applied = &rows * &w;
    let max_residual = applied
        .iter()
        .zip(moments.iter())
        .map(|(a, m)| (a - m).abs() / m.abs().max(1.0))
        .fold(0.0, f64::max);
    ExactnessReport {
        max_residual,
        positive: rule.is_positive(),
    }
}

/// Composite trapezoidal rule on `n` equidistant nodes.
pub fn trapezoid_rule(n: usize, interval: Interval) -> Result<QuadratureRule> {
    if n < 2 {
        return Err(FsbpError::InvalidArgument(format!(
            "trapezoid rule needs at least 2 nodes, got {n}"
        )));
    }
    let h = interval.length() / (n - 1) as f64;
    let mut weights = vec![h; n];
    weights[0] = h / 2.0;
    weights[n - 1] = h / 2.0;
    Ok(QuadratureRule {
        nodes: interval.equidistant(n),
        weights,
        space_label: format!("trapezoid(N={n})"),
        exactness_residual: None,
    })
}

/// Legendre `P_n`, `P_n'` and `P_n''` at an interior point of `(-1, 1)`.
fn legendre_with_derivatives(n: usize, x: f64) -> (f64, f64, f64) {
    let (mut p_prev, mut p) = (1.0, x);
    for j in 1..n {
        let jf = j as f64;
        let next = ((2.0 * jf + 1.0) * x * p - jf * p_prev) / (jf + 1.0);
        p_prev = p;
        p = next;
    }
    let nf = n as f64;
    let one_minus = 1.0 - x * x;
    let dp = nf * (p_prev - x * p) / one_minus;
    let ddp = (2.0 * x * dp - nf * (nf + 1.0) * p) / one_minus;
    (p, dp, ddp)
}

fn legendre_value(n: usize, x: f64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let (mut p_prev, mut p) = (1.0, x);
    for j in 1..n {
        let jf = j as f64;
        let next = ((2.0 * jf + 1.0) * x * p - jf * p_prev) / (jf + 1.0);
        p_prev = p;
        p = next;
    }
    p
}

/// `N`-point Gauss-Lobatto rule mapped onto `interval`.
///
/// Interior nodes are the roots of `P'_{N-1}`, found by Newton's method from
/// Chebyshev-Lobatto starting points; weights are `2 / (n(n+1) P_n(x)²)`.
/// The rule is exact on polynomials of degree `2N - 3`.
pub fn gauss_lobatto_rule(n: usize, interval: Interval) -> Result<QuadratureRule> {
    if n < 2 {
        return Err(FsbpError::InvalidArgument(format!(
            "Gauss-Lobatto rule needs at least 2 nodes, got {n}"
        )));
    }
    let deg = n - 1;
    let degf = deg as f64;
    let mut reference = vec![0.0; n];
    reference[0] = -1.0;
    reference[n - 1] = 1.0;

    // Roots come in ± pairs; solve the left half and mirror.
    for j in 1..=(n - 2) / 2 {
        let mut x = -(std::f64::consts::PI * j as f64 / degf).cos();
        // Neighbouring Chebyshev-Lobatto points bound the damped step.
        let spacing = 0.5
            * ((std::f64::consts::PI * (j as f64 + 1.0) / degf).cos()
                - (std::f64::consts::PI * j as f64 / degf).cos())
            .abs();
        let mut converged = false;
        for _ in 0..100 {
            let (_, dp, ddp) = legendre_with_derivatives(deg, x);
            let mut step = dp / ddp;
            if step.abs() > spacing {
                step = spacing.copysign(step);
            }
            x -= step;
            if step.abs() <= 1e-14 {
                converged = true;
                break;
            }
        }
        if !converged || !x.is_finite() {
            return Err(FsbpError::NewtonDivergence(n));
        }
        reference[j] = x;
        reference[n - 1 - j] = -x;
    }
    if n % 2 == 1 {
        reference[n / 2] = 0.0;
    }

    let half = interval.length() / 2.0;
    let weights = reference
        .iter()
        .map(|&x| {
            let p = legendre_value(deg, x);
            2.0 / (degf * (degf + 1.0) * p * p) * half
        })
        .collect();
    let mut nodes: Vec<f64> = reference
        .iter()
        .map(|&x| interval.left() + (x + 1.0) * half)
        .collect();
    nodes[0] = interval.left();
    nodes[n - 1] = interval.right();
    Ok(QuadratureRule {
        nodes,
        weights,
        space_label: format!("gauss-lobatto(N={n})"),
        exactness_residual: None,
    })
}

/// Least-squares rule on `n` equidistant nodes.
///
/// Among all weight vectors satisfying the `(FF)'` constraints exactly, this
/// returns the one closest in the Euclidean norm to the uniform weights
/// `(x_R - x_L)/n`. Positivity is reported through [`QuadratureRule::is_positive`]
/// but not enforced.
pub fn least_squares_rule(space: &FunctionSpace, n: usize) -> Result<QuadratureRule> {
    let k_dim = space.dim();
    if n < k_dim.max(2) {
        return Err(FsbpError::InvalidArgument(format!(
            "least-squares rule needs N >= max(K, 2) = {}, got {n}",
            k_dim.max(2)
        )));
    }
    let interval = space.interval();
    let nodes = interval.equidistant(n);
    let (phi, moments) = basis::pair_system(space.working_basis(), interval, &nodes);
    let w0 = DVector::from_element(n, interval.length() / n as f64);

    let dec = linalg::decompose(&phi, CONSTRAINT_CUTOFF)?;
    let mut w = w0.clone();
    for i in 0..dec.rank {
        let v = dec.v_t.row(i).transpose();
        let target = dec.u.column(i).dot(&moments) / dec.singular[i];
        w.axpy(target - v.dot(&w0), &v, 1.0);
    }

    let residual = (&phi * &w - &moments)
        .iter()
        .zip(moments.iter())
        .map(|(r, m)| r.abs() / m.abs().max(1.0))
        .fold(0.0, f64::max);
    if residual > EXACTNESS_TOL {
        return Err(FsbpError::InconsistentConstraints { residual });
    }
    let rule = QuadratureRule {
        nodes,
        weights: w.iter().copied().collect(),
        space_label: space.label(),
        exactness_residual: None,
    };
    Ok(rule.tagged(space))
}

fn acceptable(rule: &QuadratureRule, space: &FunctionSpace) -> Result<bool> {
    if !verify_exactness(rule, space).passed() {
        return Ok(false);
    }
    Ok(basis::unisolvency_rank(space, &rule.nodes)? == space.dim())
}

/// Searches `N = n_start, n_start + 1, …, n_max` for a positive, exact rule
/// on a grid that is unisolvent for the space.
///
/// Trigonometric spaces try the trapezoidal rule at each `N` before the
/// least-squares rule; polynomial spaces try Gauss-Lobatto at `n_start` first.
pub fn find_positive_rule(
    space: &FunctionSpace,
    n_start: usize,
    n_max: usize,
) -> Result<QuadratureRule> {
    let minimum = (space.dim() + 1).max(2);
    if n_start < minimum {
        return Err(FsbpError::InvalidArgument(format!(
            "N_start must be at least max(K + 1, 2) = {minimum}, got {n_start}"
        )));
    }
    let interval = space.interval();
    if let SpaceKind::Poly(_) = space.kind() {
        let rule = gauss_lobatto_rule(n_start, interval)?;
        if acceptable(&rule, space)? {
            return Ok(rule.tagged(space));
        }
    }
    for n in n_start..=n_max {
        if let SpaceKind::Trig(_) = space.kind() {
            let rule = trapezoid_rule(n, interval)?;
            if acceptable(&rule, space)? {
                return Ok(rule.tagged(space));
            }
        }
        match least_squares_rule(space, n) {
            Ok(rule) if acceptable(&rule, space)? => return Ok(rule),
            Ok(_) | Err(FsbpError::InconsistentConstraints { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Err(FsbpError::NoPositiveRule {
        start: n_start,
        max: n_max,
    })
}

/// A positive exact rule with exactly `n` nodes, from the family natural to
/// the space: trapezoid for trigonometric, Gauss-Lobatto for polynomial,
/// least squares otherwise (and as a fallback). `n = K` is allowed here when
/// the grid is unisolvent, which Gauss-Lobatto grids always are.
pub fn rule_with_nodes(space: &FunctionSpace, n: usize) -> Result<QuadratureRule> {
    let interval = space.interval();
    let preferred = match space.kind() {
        SpaceKind::Trig(_) => Some(trapezoid_rule(n, interval)?),
        SpaceKind::Poly(_) => Some(gauss_lobatto_rule(n, interval)?),
        _ => None,
    };
    if let Some(rule) = preferred {
        if acceptable(&rule, space)? {
            return Ok(rule.tagged(space));
        }
    }
    let rule = least_squares_rule(space, n)?;
    if acceptable(&rule, space)? {
        Ok(rule)
    } else {
        Err(FsbpError::NoPositiveRule { start: n, max: n })
    }
}
