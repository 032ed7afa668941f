//! Double-well potentials, mobilities, and the regularizations that turn the
//! singular/degenerate pair (logarithmic `F`, degenerate `m`) into a regular,
//! non-degenerate pair (`F_eps`, `m_eps`).
//!
//! Every potential carries a convexity defect `C0` with `F''(s) >= -C0`. The
//! time stepper splits `F` as
//!
//! ```text
//! F(s) = [F(s) + C0 s^2 / 2] + [-C0 s^2 / 2]
//!          convex, implicit      concave, explicit
//! ```
//!
//! The logarithmic potential is
//!
//! ```text
//! F_log(s) = theta/2 [(1+s) ln(1+s) + (1-s) ln(1-s)] + theta_c/2 (1 - s^2),   0 < theta < theta_c
//!            `-------------- F1 (singular) ---------'   `--- F2 (regular) --'
//! ```
//!
//! and its regularization replaces `F1''` outside `[-(1-eps), 1-eps]` by its
//! value at the nearest clamp point, which gives a quadratic Taylor extension.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Default temperature parameter of the logarithmic potential.
pub const DEFAULT_THETA: f64 = 0.15;
/// Default critical temperature of the logarithmic potential.
pub const DEFAULT_THETA_C: f64 = 0.3;
/// Largest admissible regularization parameter.
pub const DEFAULT_EPSILON_0: f64 = 0.5;
/// Inputs with `1 - |s|` below this are outside the logarithmic domain.
pub const LOG_GUARD: f64 = 1e-14;
/// Minimum quadrature resolution of [`EntropyFunction`].
pub const MIN_PANELS_PER_UNIT: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PotentialKind {
    /// `(s^2 - 1)^2` on the whole real line.
    Regular,
    /// The singular logarithmic potential on `(-1, 1)`.
    Logarithmic { theta: f64, theta_c: f64 },
    /// The logarithmic potential with its singular part extended
    /// quadratically beyond `|s| = 1 - epsilon`; defined on all of `R`.
    Regularized { theta: f64, theta_c: f64, epsilon: f64 },
}

/// Polynomial growth constants: `|F'(s)| <= c1 |s|^p + c2` and
/// `|F''(s)| <= c3 (1 + |s|^(p-1))`. Stored for sampling checks only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthBounds {
    pub p: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialSpec {
    kind: PotentialKind,
    c0: f64,
}

impl PotentialSpec {
    pub fn regular() -> Self {
        Self { kind: PotentialKind::Regular, c0: 4.0 }
    }

    pub fn logarithmic(theta: f64, theta_c: f64) -> Result<Self> {
        check_temperatures(theta, theta_c)?;
        Ok(Self { kind: PotentialKind::Logarithmic { theta, theta_c }, c0: theta_c - theta })
    }

    /// Replaces the convexity constant with a larger one. A larger `C0` is
    /// still a valid convex split, only more dissipative.
    pub fn with_c0(self, c0: f64) -> Result<Self> {
        let min = self.intrinsic_c0();
        if !(c0.is_finite() && c0 >= min) {
            return Err(Error::Parameter(format!(
                "potential.c0 must be finite and >= {min} (max of -F'') for {}, got {c0}",
                self.label()
            )));
        }
        Ok(Self { c0, ..self })
    }

    pub fn kind(&self) -> PotentialKind {
        self.kind
    }

    /// Convexity defect used by the split: `F''(s) >= -c0`.
    pub fn c0(&self) -> f64 {
        self.c0
    }

    /// Smallest valid `C0`, i.e. `-inf F''`.
    pub fn intrinsic_c0(&self) -> f64 {
        match self.kind {
            PotentialKind::Regular => 4.0,
            PotentialKind::Logarithmic { theta, theta_c }
            | PotentialKind::Regularized { theta, theta_c, .. } => theta_c - theta,
        }
    }

    pub fn is_logarithmic_family(&self) -> bool {
        !matches!(self.kind, PotentialKind::Regular)
    }

    /// Open interval on which the potential is defined, `None` for all of `R`.
    pub fn domain(&self) -> Option<(f64, f64)> {
        match self.kind {
            PotentialKind::Logarithmic { .. } => Some((-1.0, 1.0)),
            _ => None,
        }
    }

    /// Whether `s` lies inside the domain, honouring the guard band.
    pub fn admits(&self, s: f64) -> bool {
        if !s.is_finite() {
            return false;
        }
        match self.kind {
            PotentialKind::Logarithmic { .. } => 1.0 - s.abs() >= LOG_GUARD,
            _ => true,
        }
    }

    fn check(&self, s: f64) -> Result<()> {
        if self.admits(s) {
            Ok(())
        } else {
            Err(Error::Domain(format!("{} evaluated at s = {s}", self.label())))
        }
    }

    pub fn value(&self, s: f64) -> Result<f64> {
        self.check(s)?;
        Ok(match self.kind {
            PotentialKind::Regular => {
                let q = s * s - 1.0;
                q * q
            }
            PotentialKind::Logarithmic { theta, theta_c } => {
                log_singular(theta, s) + 0.5 * theta_c * (1.0 - s * s)
            }
            PotentialKind::Regularized { theta, theta_c, epsilon } => {
                regularized_singular(theta, epsilon, s, 0) + 0.5 * theta_c * (1.0 - s * s)
            }
        })
    }

    /// First (`order = 1`) or second (`order = 2`) derivative.
    pub fn deriv(&self, s: f64, order: u8) -> Result<f64> {
        self.check(s)?;
        Ok(match (self.kind, order) {
            (PotentialKind::Regular, 1) => 4.0 * s * (s * s - 1.0),
            (PotentialKind::Regular, 2) => 12.0 * s * s - 4.0,
            (PotentialKind::Logarithmic { theta, theta_c }, 1) => theta * s.atanh() - theta_c * s,
            (PotentialKind::Logarithmic { theta, theta_c }, 2) => theta / (1.0 - s * s) - theta_c,
            (PotentialKind::Regularized { theta, theta_c, epsilon }, 1) => {
                regularized_singular(theta, epsilon, s, 1) - theta_c * s
            }
            (PotentialKind::Regularized { theta, theta_c, epsilon }, 2) => {
                regularized_singular(theta, epsilon, s, 2) - theta_c
            }
            (_, o) => {
                return Err(Error::Parameter(format!("derivative order must be 1 or 2, got {o}")))
            }
        })
    }

    /// Convex part of the split, `F(s) + C0 s^2 / 2`.
    pub fn convex_value(&self, s: f64) -> Result<f64> {
        Ok(self.value(s)? + 0.5 * self.c0 * s * s)
    }

    /// Concave part of the split, `-C0 s^2 / 2`.
    pub fn concave_value(&self, s: f64) -> f64 {
        -0.5 * self.c0 * s * s
    }

    pub fn convex_deriv(&self, s: f64) -> Result<f64> {
        Ok(self.deriv(s, 1)? + self.c0 * s)
    }

    pub fn convex_second(&self, s: f64) -> Result<f64> {
        Ok(self.deriv(s, 2)? + self.c0)
    }

    pub fn concave_deriv(&self, s: f64) -> f64 {
        -self.c0 * s
    }

    /// Singular part `F1` (or `F1_eps`) of the logarithmic family.
    pub fn singular_value(&self, s: f64) -> Result<Option<f64>> {
        self.check(s)?;
        Ok(match self.kind {
            PotentialKind::Regular => None,
            PotentialKind::Logarithmic { theta, .. } => Some(log_singular(theta, s)),
            PotentialKind::Regularized { theta, epsilon, .. } => {
                Some(regularized_singular(theta, epsilon, s, 0))
            }
        })
    }

    /// Builds `F_eps = F1_eps + F2` from a logarithmic potential.
    ///
    /// `F1_eps''` is `F1''` clamped at `+-(1 - eps)`, and `F1_eps(0) = F1(0)`,
    /// `F1_eps'(0) = F1'(0)`; integrating twice gives the Taylor extension
    /// used here in closed form.
    pub fn regularize(&self, epsilon: f64) -> Result<Self> {
        let PotentialKind::Logarithmic { theta, theta_c } = self.kind else {
            return Err(Error::Parameter(format!(
                "only the logarithmic potential can be regularized, got {}",
                self.label()
            )));
        };
        check_epsilon(epsilon)?;
        Ok(Self { kind: PotentialKind::Regularized { theta, theta_c, epsilon }, c0: self.c0 })
    }

    pub fn growth(&self) -> Option<GrowthBounds> {
        match self.kind {
            PotentialKind::Regular => Some(GrowthBounds { p: 3.0, c1: 8.0, c2: 4.0, c3: 12.0 }),
            PotentialKind::Logarithmic { .. } => None,
            PotentialKind::Regularized { theta, theta_c, epsilon } => {
                let a = 1.0 - epsilon;
                let k = theta / (1.0 - a * a) + theta_c;
                Some(GrowthBounds { p: 1.0, c1: k, c2: 0.0, c3: 0.5 * k })
            }
        }
    }

    pub fn label(&self) -> String {
        match self.kind {
            PotentialKind::Regular => "regular".to_string(),
            PotentialKind::Logarithmic { theta, theta_c } => {
                format!("logarithmic(theta={theta}, theta_c={theta_c})")
            }
            PotentialKind::Regularized { theta, theta_c, epsilon } => {
                format!("regularized(theta={theta}, theta_c={theta_c}, eps={epsilon})")
            }
        }
    }
}

fn check_temperatures(theta: f64, theta_c: f64) -> Result<()> {
    if !(theta.is_finite() && theta_c.is_finite() && 0.0 < theta && theta < theta_c) {
        return Err(Error::Parameter(format!(
            "logarithmic potential needs 0 < theta < theta_c, got theta = {theta}, theta_c = {theta_c}"
        )));
    }
    Ok(())
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon <= DEFAULT_EPSILON_0) {
        return Err(Error::Parameter(format!(
            "regularization parameter must lie in (0, {DEFAULT_EPSILON_0}], got {epsilon}"
        )));
    }
    Ok(())
}

/// `theta/2 [(1+s) ln(1+s) + (1-s) ln(1-s)]`.
fn log_singular(theta: f64, s: f64) -> f64 {
    0.5 * theta * ((1.0 + s) * s.ln_1p() + (1.0 - s) * (-s).ln_1p())
}

/// `F1_eps` and its first two derivatives.
fn regularized_singular(theta: f64, epsilon: f64, s: f64, order: u8) -> f64 {
    let a = 1.0 - epsilon;
    if s.abs() <= a {
        return match order {
            0 => log_singular(theta, s),
            1 => theta * s.atanh(),
            _ => theta / (1.0 - s * s),
        };
    }
    let edge = a.copysign(s);
    let f0 = log_singular(theta, edge);
    let f1 = theta * edge.atanh();
    let f2 = theta / (1.0 - a * a);
    let d = s - edge;
    match order {
        0 => f0 + f1 * d + 0.5 * f2 * d * d,
        1 => f1 + f2 * d,
        _ => f2,
    }
}

/// A named scalar function, used for user-supplied mobility shapes.
#[derive(Clone)]
pub struct ScalarFn {
    label: String,
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl ScalarFn {
    pub fn new(label: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { label: label.into(), f: Arc::new(f) }
    }

    pub fn one() -> Self {
        Self::new("1", |_| 1.0)
    }

    pub fn eval(&self, s: f64) -> f64 {
        (self.f)(s)
    }
}

impl fmt::Debug for ScalarFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ScalarFn({})", self.label)
    }
}

#[derive(Debug, Clone)]
pub enum MobilitySpec {
    Constant(f64),
    /// `m1 <= m(s) <= m2` for all `s`.
    NonDegenerate { m: ScalarFn, m1: f64, m2: f64 },
    /// `k(s) (1 - s^2)^n` on `[-1, 1]`, zero outside.
    Degenerate { k: ScalarFn, n: u32, eps0: f64 },
    /// A degenerate mobility frozen at its values at `+-(1 - epsilon)`.
    Clamped { base: Box<MobilitySpec>, epsilon: f64 },
}

impl MobilitySpec {
    pub fn constant(value: f64) -> Result<Self> {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::Parameter(format!("constant mobility must be positive, got {value}")));
        }
        Ok(Self::Constant(value))
    }

    pub fn nondegenerate(m: ScalarFn, m1: f64, m2: f64) -> Result<Self> {
        if !(m1 > 0.0 && m1 <= m2 && m2.is_finite()) {
            return Err(Error::Parameter(format!(
                "non-degenerate mobility needs 0 < m1 <= m2, got m1 = {m1}, m2 = {m2}"
            )));
        }
        Ok(Self::NonDegenerate { m, m1, m2 })
    }

    /// `(1 - s^2)^n` with `k = 1`.
    pub fn degenerate(n: u32) -> Result<Self> {
        Self::degenerate_with(ScalarFn::one(), n, DEFAULT_EPSILON_0)
    }

    pub fn degenerate_with(k: ScalarFn, n: u32, eps0: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Parameter("degenerate mobility exponent n must be >= 1".into()));
        }
        if !(eps0 > 0.0 && eps0 < 1.0) {
            return Err(Error::Parameter(format!("eps0 must lie in (0, 1), got {eps0}")));
        }
        Ok(Self::Degenerate { k, n, eps0 })
    }

    pub fn value(&self, s: f64) -> f64 {
        match self {
            Self::Constant(v) => *v,
            Self::NonDegenerate { m, .. } => m.eval(s),
            Self::Degenerate { k, n, .. } => {
                if s.abs() >= 1.0 {
                    0.0
                } else {
                    k.eval(s) * (1.0 - s * s).powi(*n as i32)
                }
            }
            Self::Clamped { base, epsilon } => {
                let a = 1.0 - epsilon;
                base.value(s.clamp(-a, a))
            }
        }
    }

    /// `m_eps`, equal to `m` on `|s| <= 1 - eps` and constant beyond.
    pub fn regularize(&self, epsilon: f64) -> Result<Self> {
        let Self::Degenerate { eps0, .. } = self else {
            return Err(Error::Parameter(format!(
                "only a degenerate mobility can be regularized, got {}",
                self.label()
            )));
        };
        if !(epsilon > 0.0 && epsilon <= *eps0) {
            return Err(Error::Parameter(format!(
                "mobility regularization parameter must lie in (0, {eps0}], got {epsilon}"
            )));
        }
        Ok(Self::Clamped { base: Box::new(self.clone()), epsilon })
    }

    pub fn is_degenerate(&self) -> bool {
        matches!(self, Self::Degenerate { .. })
    }

    /// Lower and upper bounds `(m1, m2)`; `None` for a degenerate mobility.
    pub fn bounds(&self) -> Option<(f64, f64)> {
        match self {
            Self::Constant(v) => Some((*v, *v)),
            Self::NonDegenerate { m1, m2, .. } => Some((*m1, *m2)),
            Self::Degenerate { .. } => None,
            Self::Clamped { base, epsilon } => {
                let a = 1.0 - epsilon;
                let m1 = base.value(a).min(base.value(-a));
                let m2 = (0..=1000)
                    .map(|i| base.value(-a + 2.0 * a * i as f64 / 1000.0))
                    .fold(m1, f64::max);
                Some((m1, m2))
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::Constant(v) => format!("constant({v})"),
            Self::NonDegenerate { m, m1, m2 } => format!("nondegenerate({}, {m1}, {m2})", m.label),
            Self::Degenerate { k, n, .. } => format!("degenerate(k={}, n={n})", k.label),
            Self::Clamped { base, epsilon } => format!("clamped({}, eps={epsilon})", base.label()),
        }
    }
}

/// Convex entropy `G` with `G(0) = G'(0) = 0` and `G'' = 1/m`.
///
/// `G'` and `G` are tabulated by composite Simpson quadrature on a uniform
/// grid over `[-L, L]`, where `1/m` is smooth; beyond `L` the mobility is
/// constant (clamped or constant kinds) and `G` continues as the exact
/// quadratic. Within a panel the remaining partial integral is another
/// Simpson rule, so evaluation is `O(1)`.
#[derive(Debug, Clone)]
pub struct EntropyFunction {
    mobility: MobilitySpec,
    reach: f64,
    step: f64,
    pos: Table,
    neg: Table,
}

#[derive(Debug, Clone, Default)]
struct Table {
    g: Vec<f64>,
    d1: Vec<f64>,
    inv_m: Vec<f64>,
}

impl EntropyFunction {
    pub fn new(mobility: &MobilitySpec, panels_per_unit: usize) -> Result<Self> {
        if panels_per_unit < MIN_PANELS_PER_UNIT {
            return Err(Error::Parameter(format!(
                "entropy quadrature needs >= {MIN_PANELS_PER_UNIT} panels per unit length, got {panels_per_unit}"
            )));
        }
        let reach = match mobility {
            MobilitySpec::Degenerate { .. } => {
                return Err(Error::Parameter(
                    "entropy function needs a positive mobility; regularize the degenerate mobility first".into(),
                ))
            }
            MobilitySpec::Clamped { epsilon, .. } => 1.0 - epsilon,
            _ => 1.0,
        };
        let panels = (reach * panels_per_unit as f64).ceil() as usize;
        let step = reach / panels as f64;
        let build = |sign: f64| {
            let inv = |x: f64| 1.0 / mobility.value(sign * x);
            let mut t = Table {
                g: Vec::with_capacity(panels + 1),
                d1: Vec::with_capacity(panels + 1),
                inv_m: Vec::with_capacity(panels + 1),
            };
            t.g.push(0.0);
            t.d1.push(0.0);
            t.inv_m.push(inv(0.0));
            for k in 0..panels {
                let x = k as f64 * step;
                let (g0, gm, g1) = (t.inv_m[k], inv(x + 0.5 * step), inv(x + step));
                let d1 = t.d1[k] + step / 6.0 * (g0 + 4.0 * gm + g1);
                let g = t.g[k] + step * t.d1[k] + step * step / 6.0 * (g0 + 2.0 * gm);
                t.g.push(g);
                t.d1.push(d1);
                t.inv_m.push(g1);
            }
            t
        };
        let pos = build(1.0);
        let neg = build(-1.0);
        Ok(Self { mobility: mobility.clone(), reach, step, pos, neg })
    }

    pub fn mobility(&self) -> &MobilitySpec {
        &self.mobility
    }

    /// `G(s)`.
    pub fn value(&self, s: f64) -> f64 {
        let (table, sign) = if s >= 0.0 { (&self.pos, 1.0) } else { (&self.neg, -1.0) };
        let x = s.abs();
        let inv = |y: f64| 1.0 / self.mobility.value(sign * y);
        if x >= self.reach {
            let last = table.g.len() - 1;
            let d = x - self.reach;
            return table.g[last] + table.d1[last] * d + 0.5 * table.inv_m[last] * d * d;
        }
        let k = ((x / self.step) as usize).min(table.g.len() - 2);
        let d = x - k as f64 * self.step;
        table.g[k] + d * table.d1[k] + d * d / 6.0 * (table.inv_m[k] + 2.0 * inv(k as f64 * self.step + 0.5 * d))
    }

    /// `G'(s)`.
    pub fn derivative(&self, s: f64) -> f64 {
        let (table, sign) = if s >= 0.0 { (&self.pos, 1.0) } else { (&self.neg, -1.0) };
        let x = s.abs();
        let inv = |y: f64| 1.0 / self.mobility.value(sign * y);
        let magnitude = if x >= self.reach {
            let last = table.g.len() - 1;
            table.d1[last] + table.inv_m[last] * (x - self.reach)
        } else {
            let k = ((x / self.step) as usize).min(table.g.len() - 2);
            let x0 = k as f64 * self.step;
            let d = x - x0;
            table.d1[k] + d / 6.0 * (table.inv_m[k] + 4.0 * inv(x0 + 0.5 * d) + inv(x))
        };
        sign * magnitude
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log_default() -> PotentialSpec {
        PotentialSpec::logarithmic(DEFAULT_THETA, DEFAULT_THETA_C).unwrap()
    }

    #[test]
    fn regular_values() {
        let f = PotentialSpec::regular();
        assert_eq!(f.value(1.0).unwrap(), 0.0);
        assert_eq!(f.value(0.0).unwrap(), 1.0);
        assert_eq!(f.deriv(1.0, 1).unwrap(), 0.0);
        assert_eq!(f.deriv(0.0, 2).unwrap(), -4.0);
        assert_eq!(f.c0(), 4.0);
    }

    #[test]
    fn logarithmic_at_origin_is_half_theta_c() {
        let f = PotentialSpec::logarithmic(0.1, 0.2).unwrap();
        assert!((f.value(0.0).unwrap() - 0.1).abs() < 1e-15);
        for i in 1..100 {
            let s = i as f64 / 100.0;
            assert_eq!(f.value(s).unwrap(), f.value(-s).unwrap());
        }
    }

    #[test]
    fn logarithmic_domain_guard() {
        let f = log_default();
        assert!(matches!(f.value(1.0), Err(Error::Domain(_))));
        assert!(matches!(f.deriv(-1.0 + 1e-16, 1), Err(Error::Domain(_))));
        assert!(f.value(1.0 - 1e-12).is_ok());
        assert!(f.value(f64::NAN).is_err());
    }

    #[test]
    fn logarithmic_derivative_blows_up_at_the_ends() {
        let f = log_default();
        let near = [1.0 - 1e-4, 1.0 - 1e-8, 1.0 - 1e-12];
        let vals: Vec<f64> = near.iter().map(|&s| f.deriv(s, 1).unwrap()).collect();
        assert!(vals.windows(2).all(|w| w[1] > w[0]));
        // Each factor 1e-4 closer to the end adds theta/2 * ln(1e4).
        let step = 0.5 * DEFAULT_THETA * 1e4_f64.ln();
        assert!((vals[2] - vals[1] - step).abs() < 1e-3);
        let neg: Vec<f64> = near.iter().map(|&s| f.deriv(-s, 1).unwrap()).collect();
        assert!(neg.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn temperature_order_is_enforced() {
        assert!(PotentialSpec::logarithmic(0.3, 0.2).is_err());
        assert!(PotentialSpec::logarithmic(0.0, 0.2).is_err());
        assert!(PotentialSpec::regular().with_c0(3.0).is_err());
        assert_eq!(PotentialSpec::regular().with_c0(6.0).unwrap().c0(), 6.0);
    }

    #[test]
    fn regularization_matches_inside_clamp() {
        let f = log_default();
        let g = f.regularize(0.1).unwrap();
        for i in -900..=900 {
            let s = i as f64 / 1000.0;
            assert_eq!(f.value(s).unwrap(), g.value(s).unwrap());
            assert_eq!(f.deriv(s, 1).unwrap(), g.deriv(s, 1).unwrap());
        }
        assert!(g.value(3.0).is_ok());
        assert!(f.regularize(0.0).is_err());
        assert!(f.regularize(0.6).is_err());
        assert!(PotentialSpec::regular().regularize(0.1).is_err());
    }

    #[test]
    fn regularized_is_c2_at_the_joint() {
        let g = log_default().regularize(0.2).unwrap();
        let a = 0.8;
        for order in [0u8, 1, 2] {
            let eval = |s: f64| if order == 0 { g.value(s).unwrap() } else { g.deriv(s, order).unwrap() };
            assert!((eval(a + 1e-12) - eval(a - 1e-12)).abs() < 1e-9, "order {order}");
            assert!((eval(-a + 1e-12) - eval(-a - 1e-12)).abs() < 1e-9, "order {order}");
        }
    }

    #[test]
    fn degenerate_mobility_values() {
        let m = MobilitySpec::degenerate(1).unwrap();
        assert_eq!(m.value(0.0), 1.0);
        assert_eq!(m.value(1.0), 0.0);
        assert_eq!(m.value(-1.0), 0.0);
        assert_eq!(m.value(1.5), 0.0);
        assert_eq!(MobilitySpec::constant(1.0).unwrap().value(-7.0), 1.0);
    }

    #[test]
    fn clamped_mobility() {
        let m = MobilitySpec::degenerate(1).unwrap();
        let me = m.regularize(0.1).unwrap();
        assert!((me.value(0.99) - 0.19).abs() < 1e-15);
        assert!((me.value(-5.0) - 0.19).abs() < 1e-15);
        assert_eq!(me.value(0.3), m.value(0.3));
        let (m1, m2) = me.bounds().unwrap();
        assert!((m1 - 0.19).abs() < 1e-15);
        assert_eq!(m2, 1.0);
        assert!(m.regularize(0.0).is_err());
        assert!(m.regularize(0.7).is_err());
        assert!(me.regularize(0.1).is_err());
    }

    #[test]
    fn entropy_constant_mobility_is_half_square() {
        let g = EntropyFunction::new(&MobilitySpec::constant(1.0).unwrap(), 128).unwrap();
        assert!((g.value(0.5) - 0.125).abs() < 1e-8);
        assert_eq!(g.value(0.0), 0.0);
        assert!((g.value(-0.7) - 0.245).abs() < 1e-12);
        assert!((g.value(2.0) - 2.0).abs() < 1e-12);
        assert!((g.derivative(0.3) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn entropy_rejects_degenerate_and_coarse_tables() {
        let m = MobilitySpec::degenerate(1).unwrap();
        assert!(EntropyFunction::new(&m, 256).is_err());
        let me = m.regularize(0.1).unwrap();
        assert!(EntropyFunction::new(&me, 64).is_err());
    }

    #[test]
    fn entropy_matches_closed_form_for_clamped_quadratic() {
        // For m = 1 - s^2 on |s| < a: G(s) = ((1+s) ln(1+s) + (1-s) ln(1-s)) / 2.
        let me = MobilitySpec::degenerate(1).unwrap().regularize(0.1).unwrap();
        let g = EntropyFunction::new(&me, 256).unwrap();
        for i in -89..=89 {
            let s = i as f64 / 100.0;
            let exact = 0.5 * ((1.0 + s) * s.ln_1p() + (1.0 - s) * (-s).ln_1p());
            assert!((g.value(s) - exact).abs() < 1e-9, "s = {s}: {} vs {exact}", g.value(s));
        }
    }
}
