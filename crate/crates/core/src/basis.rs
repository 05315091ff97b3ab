//! Function spaces, Vandermonde-like matrices and boundary-product moments.
//!
//! A [`FunctionSpace`] carries two bases spanning the same space:
//!
//! * the *declared* basis, in the conventional ordering (`1, x, x², …` for
//!   polynomials, `1, x, …, x^{d-1}, eˣ` for exponentials, …). This is what
//!   [`vandermonde`] and [`pair_derivative_rows`] expose.
//! * a *working* basis used internally for rank decisions and operator
//!   assembly. For polynomial parts it is the Legendre basis on the
//!   interval; monomials become numerically dependent long before degree 40.
//!
//! Every quantity the operator depends on is a property of the span, so the
//! two bases are interchangeable in exact arithmetic.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{FsbpError, Result};
use crate::linalg;

/// Closed interval `[left, right]` with `left < right`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    left: f64,
    right: f64,
}

impl Interval {
    pub fn new(left: f64, right: f64) -> Result<Self> {
        if !(left.is_finite() && right.is_finite() && left < right) {
            return Err(FsbpError::InvalidInterval { left, right });
        }
        Ok(Self { left, right })
    }

    pub fn unit() -> Self {
        Self {
            left: 0.0,
            right: 1.0,
        }
    }

    pub fn left(&self) -> f64 {
        self.left
    }

    pub fn right(&self) -> f64 {
        self.right
    }

    pub fn length(&self) -> f64 {
        self.right - self.left
    }

    /// Membership with a relative slack of a few ulps of the interval scale,
    /// so that affinely mapped endpoints are still accepted.
    pub fn contains(&self, x: f64) -> bool {
        let slack = 1e-12 * (self.left.abs().max(self.right.abs()).max(self.length()));
        x >= self.left - slack && x <= self.right + slack
    }

    /// Affine map sending `self` onto `target`.
    pub fn map_to(&self, target: &Interval, x: f64) -> f64 {
        target.left + (x - self.left) * (target.length() / self.length())
    }

    /// Splits into `count` equal consecutive sub-intervals.
    pub fn split(&self, count: usize) -> Vec<Interval> {
        let h = self.length() / count as f64;
        (0..count)
            .map(|i| {
                let left = self.left + i as f64 * h;
                let right = if i + 1 == count {
                    self.right
                } else {
                    self.left + (i + 1) as f64 * h
                };
                Interval { left, right }
            })
            .collect()
    }

    /// `n` equidistant points including both endpoints.
    pub fn equidistant(&self, n: usize) -> Vec<f64> {
        if n == 1 {
            return vec![self.left];
        }
        let h = self.length() / (n - 1) as f64;
        (0..n)
            .map(|i| {
                if i + 1 == n {
                    self.right
                } else {
                    self.left + i as f64 * h
                }
            })
            .collect()
    }
}

pub(crate) type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// One basis function with its analytic derivative.
#[derive(Clone)]
pub struct BasisElement {
    value: RealFn,
    derivative: RealFn,
    label: String,
}

impl BasisElement {
    pub fn new(
        label: impl Into<String>,
        value: impl Fn(f64) -> f64 + Send + Sync + 'static,
        derivative: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            value: Arc::new(value),
            derivative: Arc::new(derivative),
            label: label.into(),
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        (self.value)(x)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        (self.derivative)(x)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Composition `f ∘ ξ⁻¹` where `ξ` maps `from` onto `to`.
    fn pullback(&self, from: Interval, to: Interval) -> Self {
        let scale = from.length() / to.length();
        let (v, d) = (self.value.clone(), self.derivative.clone());
        let back = move |x: f64| from.left + (x - to.left) * scale;
        Self {
            value: Arc::new(move |x| v(back(x))),
            derivative: Arc::new(move |x| d(back(x)) * scale),
            label: self.label.clone(),
        }
    }
}

impl fmt::Debug for BasisElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BasisElement")
            .field("label", &self.label)
            .finish()
    }
}

/// The built-in families of function spaces.
#[derive(Debug, Clone, PartialEq)]
pub enum SpaceKind {
    /// Polynomials of degree at most `d`.
    Poly(usize),
    /// `1, sin(kωx), cos(kωx)` for `k = 1..=d`, `ω = 2π/(x_R - x_L)`.
    Trig(usize),
    /// `1, x, …, x^{d-1}, eˣ`.
    Exp(usize),
    /// Cardinal functions of cubic RBF interpolation with a constant tail.
    RbfCubic(Vec<f64>),
}

impl SpaceKind {
    pub fn dimension(&self) -> usize {
        match self {
            SpaceKind::Poly(d) => d + 1,
            SpaceKind::Trig(d) => 2 * d + 1,
            SpaceKind::Exp(d) => d + 1,
            SpaceKind::RbfCubic(c) => c.len(),
        }
    }

    /// Node count used when none is requested. For poly, trig and exp this is
    /// the smallest grid on which the matching rule family can be positive
    /// and exact; for RBF spaces it is only a starting point for a search.
    pub fn default_nodes(&self) -> usize {
        match self {
            SpaceKind::Poly(d) => (d + 1).max(2),
            SpaceKind::Trig(d) => 2 * d + 2,
            SpaceKind::Exp(d) => (3 * d).saturating_sub(1).max(d + 2),
            SpaceKind::RbfCubic(c) => c.len() + 1,
        }
    }

    /// Re-expresses the kind on an affinely mapped interval. Only RBF
    /// centers carry coordinates.
    pub fn mapped(&self, from: &Interval, to: &Interval) -> SpaceKind {
        match self {
            SpaceKind::RbfCubic(c) => {
                SpaceKind::RbfCubic(c.iter().map(|&x| from.map_to(to, x)).collect())
            }
            other => other.clone(),
        }
    }
}

impl fmt::Display for SpaceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpaceKind::Poly(d) => write!(f, "poly:d={d}"),
            SpaceKind::Trig(d) => write!(f, "trig:d={d}"),
            SpaceKind::Exp(d) => write!(f, "exp:d={d}"),
            SpaceKind::RbfCubic(c) => {
                let list: Vec<String> = c.iter().map(|x| format!("{x}")).collect();
                write!(f, "rbf-cubic:centers={}", list.join(","))
            }
        }
    }
}

impl FromStr for SpaceKind {
    type Err = FsbpError;

    fn from_str(s: &str) -> Result<Self> {
        let syntax = |reason: &str| FsbpError::SpaceSyntax {
            input: s.to_string(),
            reason: reason.to_string(),
        };
        let (family, args) = s
            .trim()
            .split_once(':')
            .ok_or_else(|| syntax("expected `<family>:<key>=<value>`"))?;
        let (key, value) = args
            .split_once('=')
            .ok_or_else(|| syntax("expected `<key>=<value>` after the family"))?;
        match (family, key) {
            ("poly" | "trig" | "exp", "d") => {
                let d: usize = value
                    .trim()
                    .parse()
                    .map_err(|_| syntax("degree must be a non-negative integer"))?;
                Ok(match family {
                    "poly" => SpaceKind::Poly(d),
                    "trig" => SpaceKind::Trig(d),
                    _ => SpaceKind::Exp(d),
                })
            }
            ("rbf-cubic", "centers") => {
                let centers = value
                    .split(',')
                    .map(|c| c.trim().parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| syntax("centers must be a comma-separated list of reals"))?;
                Ok(SpaceKind::RbfCubic(centers))
            }
            ("poly" | "trig" | "exp", _) => Err(syntax("expected key `d`")),
            ("rbf-cubic", _) => Err(syntax("expected key `centers`")),
            _ => Err(syntax("unknown family (poly, trig, exp, rbf-cubic)")),
        }
    }
}

/// A finite-dimensional function space on an interval.
#[derive(Debug, Clone)]
pub struct FunctionSpace {
    interval: Interval,
    kind: SpaceKind,
    basis: Vec<BasisElement>,
    working: Vec<BasisElement>,
    contains_constants: bool,
}

impl FunctionSpace {
    pub fn interval(&self) -> Interval {
        self.interval
    }

    pub fn kind(&self) -> &SpaceKind {
        &self.kind
    }

    pub fn basis(&self) -> &[BasisElement] {
        &self.basis
    }

    pub(crate) fn working_basis(&self) -> &[BasisElement] {
        &self.working
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn contains_constants(&self) -> bool {
        self.contains_constants
    }

    pub fn label(&self) -> String {
        self.kind.to_string()
    }

    /// The space `{f ∘ ξ⁻¹}` on `target`, where `ξ` is the affine map from
    /// this space's interval onto `target`.
    pub fn mapped_to(&self, target: Interval) -> FunctionSpace {
        let from = self.interval;
        FunctionSpace {
            interval: target,
            kind: self.kind.mapped(&from, &target),
            basis: self.basis.iter().map(|b| b.pullback(from, target)).collect(),
            working: self.working.iter().map(|b| b.pullback(from, target)).collect(),
            contains_constants: self.contains_constants,
        }
    }
}

/// Legendre polynomial `P_k` and its derivative at `t ∈ [-1, 1]`.
fn legendre(k: usize, t: f64) -> (f64, f64) {
    if k == 0 {
        return (1.0, 0.0);
    }
    let (mut p_prev, mut p) = (1.0, t);
    let (mut dp_prev, mut dp) = (0.0, 1.0);
    for j in 1..k {
        let jf = j as f64;
        let p_next = ((2.0 * jf + 1.0) * t * p - jf * p_prev) / (jf + 1.0);
        let dp_next = dp_prev + (2.0 * jf + 1.0) * p;
        p_prev = p;
        p = p_next;
        dp_prev = dp;
        dp = dp_next;
    }
    (p, dp)
}

/// `Σ_{k≥m} s^k / k!`
fn exp_remainder(m: usize, s: f64) -> f64 {
    if s.abs() > 1.0 {
        let head: f64 = (0..m).map(|k| s.powi(k as i32) / factorial(k)).sum();
        return s.exp() - head;
    }
    let mut term = s.powi(m as i32) / factorial(m);
    let mut sum = 0.0_f64;
    let mut k = m;
    while term != 0.0 && term.abs() > f64::EPSILON * sum.abs() * 1e-3 {
        sum += term;
        k += 1;
        term *= s / k as f64;
    }
    sum
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

fn legendre_element(k: usize, interval: Interval) -> BasisElement {
    let (a, len) = (interval.left, interval.length());
    let to_ref = move |x: f64| 2.0 * (x - a) / len - 1.0;
    BasisElement::new(
        format!("P{k}"),
        move |x| legendre(k, to_ref(x)).0,
        move |x| legendre(k, to_ref(x)).1 * 2.0 / len,
    )
}

fn monomial(k: usize) -> BasisElement {
    let label = match k {
        0 => "1".to_string(),
        1 => "x".to_string(),
        _ => format!("x^{k}"),
    };
    BasisElement::new(
        label,
        move |x| x.powi(k as i32),
        move |x| {
            if k == 0 {
                0.0
            } else {
                k as f64 * x.powi(k as i32 - 1)
            }
        },
    )
}

fn cubic(s: f64) -> f64 {
    s.abs().powi(3)
}

fn cubic_derivative(s: f64) -> f64 {
    3.0 * s * s.abs()
}

/// Coefficients of the cardinal functions: column `i` holds
/// `(α_1i, …, α_mi, β_i)` with `c_i(x) = Σ_j α_ji |x - x_j|³ + β_i`.
fn rbf_cardinal_coefficients(centers: &[f64]) -> Result<DMatrix<f64>> {
    let m = centers.len();
    let mut system = DMatrix::zeros(m + 1, m + 1);
    for i in 0..m {
        for j in 0..m {
            system[(i, j)] = cubic(centers[i] - centers[j]);
        }
        system[(i, m)] = 1.0;
        system[(m, i)] = 1.0;
    }
    let mut rhs = DMatrix::zeros(m + 1, m);
    for i in 0..m {
        rhs[(i, i)] = 1.0;
    }
    let rank = linalg::numerical_rank(&system, 1e-12)?;
    if rank < m + 1 {
        return Err(FsbpError::Singular(
            "cubic RBF interpolation system".to_string(),
        ));
    }
    system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| FsbpError::Singular("cubic RBF interpolation system".to_string()))
}

fn rbf_cardinal_basis(centers: &[f64]) -> Result<Vec<BasisElement>> {
    let coeffs = rbf_cardinal_coefficients(centers)?;
    let m = centers.len();
    let centers: Arc<[f64]> = centers.into();
    Ok((0..m)
        .map(|i| {
            let alpha: Arc<[f64]> = (0..m).map(|j| coeffs[(j, i)]).collect();
            let beta = coeffs[(m, i)];
            let (c_v, a_v) = (centers.clone(), alpha.clone());
            let (c_d, a_d) = (centers.clone(), alpha);
            BasisElement::new(
                format!("c{}", i + 1),
                move |x| {
                    c_v.iter()
                        .zip(a_v.iter())
                        .map(|(&c, &a)| a * cubic(x - c))
                        .sum::<f64>()
                        + beta
                },
                move |x| {
                    c_d.iter()
                        .zip(a_d.iter())
                        .map(|(&c, &a)| a * cubic_derivative(x - c))
                        .sum()
                },
            )
        })
        .collect())
}

/// Instantiates one of the built-in spaces on `interval`.
pub fn make_space(kind: SpaceKind, interval: Interval) -> Result<FunctionSpace> {
    let (basis, working) = match &kind {
        SpaceKind::Poly(d) => {
            let basis = (0..=*d).map(monomial).collect();
            let working = (0..=*d).map(|k| legendre_element(k, interval)).collect();
            (basis, working)
        }
        SpaceKind::Trig(d) => {
            if *d < 1 {
                return Err(FsbpError::InvalidSpace(
                    "trig spaces need d >= 1".to_string(),
                ));
            }
            let omega = 2.0 * std::f64::consts::PI / interval.length();
            let mut basis = vec![monomial(0)];
            for k in 1..=*d {
                let w = k as f64 * omega;
                basis.push(BasisElement::new(
                    format!("sin({k}wx)"),
                    move |x| (w * x).sin(),
                    move |x| w * (w * x).cos(),
                ));
                basis.push(BasisElement::new(
                    format!("cos({k}wx)"),
                    move |x| (w * x).cos(),
                    move |x| -w * (w * x).sin(),
                ));
            }
            (basis.clone(), basis)
        }
        SpaceKind::Exp(d) => {
            if *d < 1 {
                return Err(FsbpError::InvalidSpace(
                    "exp spaces need d >= 1".to_string(),
                ));
            }
            let mut basis: Vec<BasisElement> = (0..*d).map(monomial).collect();
            basis.push(BasisElement::new("e^x", f64::exp, f64::exp));
            let mut working: Vec<BasisElement> =
                (0..*d).map(|k| legendre_element(k, interval)).collect();
            // e^x spans the same space as its Taylor remainder about the
            // midpoint, which stays well separated from P_{d-1} on short
            // intervals.
            let (mid, half) = (0.5 * (interval.left + interval.right), 0.5 * interval.length());
            let order = *d;
            let scale = exp_remainder(order, half);
            working.push(BasisElement::new(
                "e^x remainder",
                move |x| exp_remainder(order, x - mid) / scale,
                move |x| exp_remainder(order - 1, x - mid) / scale,
            ));
            (basis, working)
        }
        SpaceKind::RbfCubic(centers) => {
            if centers.len() < 2 {
                return Err(FsbpError::InvalidSpace(
                    "rbf-cubic needs at least two centers".to_string(),
                ));
            }
            let mut sorted = centers.clone();
            sorted.sort_by(f64::total_cmp);
            if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
                return Err(FsbpError::DuplicateCenter(w[0]));
            }
            for &c in centers {
                if !interval.contains(c) {
                    return Err(FsbpError::NodeOutsideInterval {
                        node: c,
                        left: interval.left,
                        right: interval.right,
                    });
                }
            }
            let touches = |e: f64| sorted.iter().any(|&c| (c - e).abs() <= 1e-12 * interval.length());
            if !touches(interval.left) || !touches(interval.right) {
                return Err(FsbpError::InvalidSpace(
                    "rbf-cubic centers must include both endpoints".to_string(),
                ));
            }
            let basis = rbf_cardinal_basis(centers)?;
            (basis.clone(), basis)
        }
    };
    Ok(FunctionSpace {
        interval,
        kind,
        basis,
        working,
        contains_constants: true,
    })
}

fn check_grid(space: &FunctionSpace, grid: &[f64]) -> Result<()> {
    let iv = space.interval;
    match grid.iter().find(|&&x| !iv.contains(x)) {
        Some(&node) => Err(FsbpError::NodeOutsideInterval {
            node,
            left: iv.left,
            right: iv.right,
        }),
        None => Ok(()),
    }
}

pub(crate) fn sample(basis: &[BasisElement], grid: &[f64], derivative: bool) -> DMatrix<f64> {
    DMatrix::from_fn(grid.len(), basis.len(), |n, k| {
        if derivative {
            basis[k].derivative(grid[n])
        } else {
            basis[k].value(grid[n])
        }
    })
}

/// `F[n, k] = f_k(x_n)` for the declared basis.
pub fn vandermonde(space: &FunctionSpace, grid: &[f64]) -> Result<DMatrix<f64>> {
    check_grid(space, grid)?;
    Ok(sample(&space.basis, grid, false))
}

/// `F_x[n, k] = f_k'(x_n)` for the declared basis.
pub fn vandermonde_derivative(space: &FunctionSpace, grid: &[f64]) -> Result<DMatrix<f64>> {
    check_grid(space, grid)?;
    Ok(sample(&space.basis, grid, true))
}

/// `f_k(x_R) f_l(x_R) - f_k(x_L) f_l(x_L)`, the exact integral of `(f_k f_l)'`.
/// Indices are zero-based.
pub fn boundary_product_moment(space: &FunctionSpace, k: usize, l: usize) -> f64 {
    moment_of(&space.basis, space.interval, k, l)
}

fn moment_of(basis: &[BasisElement], iv: Interval, k: usize, l: usize) -> f64 {
    let (f, g) = (&basis[k], &basis[l]);
    f.value(iv.right) * g.value(iv.right) - f.value(iv.left) * g.value(iv.left)
}

/// Constraint rows of `(FF)'`-exactness: one row per unordered pair
/// `k <= l`, paired with the boundary moments.
pub fn pair_derivative_rows(
    space: &FunctionSpace,
    grid: &[f64],
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    check_grid(space, grid)?;
    Ok(pair_system(&space.basis, space.interval, grid))
}

pub(crate) fn pair_system(
    basis: &[BasisElement],
    iv: Interval,
    grid: &[f64],
) -> (DMatrix<f64>, DVector<f64>) {
    let values = sample(basis, grid, false);
    let derivs = sample(basis, grid, true);
    let k_dim = basis.len();
    let pairs: Vec<(usize, usize)> = (0..k_dim)
        .flat_map(|k| (k..k_dim).map(move |l| (k, l)))
        .collect();
    let rows = DMatrix::from_fn(pairs.len(), grid.len(), |r, n| {
        let (k, l) = pairs[r];
        derivs[(n, k)] * values[(n, l)] + values[(n, k)] * derivs[(n, l)]
    });
    let moments = DVector::from_fn(pairs.len(), |r, _| {
        let (k, l) = pairs[r];
        moment_of(basis, iv, k, l)
    });
    (rows, moments)
}

/// Numerical rank of the space sampled on `grid` (cutoff `1e-10·σ_max`).
/// Evaluated with the working basis, which spans the same space.
pub fn unisolvency_rank(space: &FunctionSpace, grid: &[f64]) -> Result<usize> {
    let f = sample(&space.working, grid, false);
    linalg::numerical_rank(&f, 1e-10)
}
