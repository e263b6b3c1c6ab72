//! Test potentials and their Kato-class analysis.
//!
//! A [`PotentialSpec`] is a symbolic description of `V(x)` that can be
//! evaluated anywhere in ℝ³. Profiles compose through sums, cut-offs, sign
//! parts and the Kato-norm preserving rescaling `V_θ(x) = θ V(√θ x)`.

mod hypotheses;
mod kato;
mod lorentz;
mod mollify;

pub use hypotheses::{c_n, check_hypotheses, heat_threshold, self_adjoint_threshold, HypothesisReport, Margin};
pub(crate) use kato::unit_cube_newton_integral;
pub use kato::{
    kato_modulus, kato_norm, kato_norm_detailed, kato_report, split_potential, GridRef, KatoNorm, KatoReport,
};
pub use lorentz::{lorentz_321_norm, LorentzReport, YOUNG_CONSTANT};
pub use mollify::{mollifier, mollify, MollifiedPotential};

use serde::{Deserialize, Serialize};

use crate::grid::norm3;
use crate::quad::gauss_legendre;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignPart {
    Positive,
    Negative,
}

/// Symbolic potential. Sign convention for wells: `depth > 0` is attractive,
/// i.e. `V = -depth` inside the ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialSpec {
    Zero,
    BallWell {
        radius: f64,
        depth: f64,
        #[serde(default)]
        center: [f64; 3],
    },
    Gaussian {
        width: f64,
        amplitude: f64,
        #[serde(default)]
        center: [f64; 3],
    },
    /// `c / (|x|^{2+eps} + |x|^{2-eps})`.
    InverseDecay {
        c: f64,
        eps: f64,
    },
    Sum {
        terms: Vec<PotentialSpec>,
    },
    Multiple {
        factor: f64,
        inner: Box<PotentialSpec>,
    },
    /// `θ V(√θ x)`.
    Scaled {
        theta: f64,
        inner: Box<PotentialSpec>,
    },
    /// `V` restricted to `|x| < radius` (inside) or `|x| >= radius`.
    Cutoff {
        radius: f64,
        inside: bool,
        inner: Box<PotentialSpec>,
    },
    Part {
        sign: SignPart,
        inner: Box<PotentialSpec>,
    },
    /// Radial profile sampled at ascending radii, linear in between, zero
    /// beyond the last radius.
    Tabulated {
        radii: Vec<f64>,
        values: Vec<f64>,
    },
}

impl PotentialSpec {
    pub fn ball_well(radius: f64, depth: f64) -> Self {
        Self::BallWell {
            radius,
            depth,
            center: [0.0; 3],
        }
    }

    /// Indicator of the ball of radius `radius` (a repulsive unit step).
    pub fn ball_indicator(radius: f64) -> Self {
        Self::ball_well(radius, -1.0)
    }

    pub fn gaussian(width: f64, amplitude: f64) -> Self {
        Self::Gaussian {
            width,
            amplitude,
            center: [0.0; 3],
        }
    }

    pub fn scaled(&self, theta: f64) -> Self {
        Self::Scaled {
            theta,
            inner: Box::new(self.clone()),
        }
    }

    pub fn times(&self, factor: f64) -> Self {
        Self::Multiple {
            factor,
            inner: Box::new(self.clone()),
        }
    }

    pub fn positive_part(&self) -> Self {
        Self::Part {
            sign: SignPart::Positive,
            inner: Box::new(self.clone()),
        }
    }

    pub fn negative_part(&self) -> Self {
        Self::Part {
            sign: SignPart::Negative,
            inner: Box::new(self.clone()),
        }
    }

    pub fn plus(&self, other: &PotentialSpec) -> Self {
        Self::Sum {
            terms: vec![self.clone(), other.clone()],
        }
    }

    pub fn eval(&self, x: [f64; 3]) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::BallWell { radius, depth, center } => {
                let d = norm3([x[0] - center[0], x[1] - center[1], x[2] - center[2]]);
                if d < *radius {
                    -depth
                } else {
                    0.0
                }
            }
            Self::Gaussian {
                width,
                amplitude,
                center,
            } => {
                let d = norm3([x[0] - center[0], x[1] - center[1], x[2] - center[2]]);
                amplitude * (-(d / width).powi(2)).exp()
            }
            Self::InverseDecay { c, eps } => {
                let r = norm3(x);
                if r == 0.0 {
                    return f64::INFINITY * c.signum();
                }
                c / (r.powf(2.0 + eps) + r.powf(2.0 - eps))
            }
            Self::Sum { terms } => terms.iter().map(|t| t.eval(x)).sum(),
            Self::Multiple { factor, inner } => factor * inner.eval(x),
            Self::Scaled { theta, inner } => {
                let s = theta.sqrt();
                theta * inner.eval([s * x[0], s * x[1], s * x[2]])
            }
            Self::Cutoff { radius, inside, inner } => {
                if (norm3(x) < *radius) == *inside {
                    inner.eval(x)
                } else {
                    0.0
                }
            }
            Self::Part { sign, inner } => {
                let v = inner.eval(x);
                match sign {
                    SignPart::Positive => v.max(0.0),
                    SignPart::Negative => (-v).max(0.0),
                }
            }
            Self::Tabulated { radii, values } => tabulated(radii, values, norm3(x)),
        }
    }

    /// Value on the sphere `|x| = r`; meaningful for radial specs.
    pub fn radial(&self, r: f64) -> f64 {
        self.eval([r, 0.0, 0.0])
    }

    pub fn is_radial(&self) -> bool {
        match self {
            Self::Zero | Self::InverseDecay { .. } | Self::Tabulated { .. } => true,
            Self::BallWell { center, .. } | Self::Gaussian { center, .. } => center.iter().all(|&c| c == 0.0),
            Self::Sum { terms } => terms.iter().all(|t| t.is_radial()),
            Self::Multiple { inner, .. }
            | Self::Scaled { inner, .. }
            | Self::Cutoff { inner, .. }
            | Self::Part { inner, .. } => inner.is_radial(),
        }
    }

    /// Radius of a ball centred at the origin containing the support;
    /// `None` for unbounded support.
    pub fn support_radius(&self) -> Option<f64> {
        match self {
            Self::Zero => Some(0.0),
            Self::BallWell { radius, center, .. } => Some(norm3(*center) + radius),
            Self::Gaussian { .. } | Self::InverseDecay { .. } => None,
            Self::Sum { terms } => terms
                .iter()
                .map(|t| t.support_radius())
                .try_fold(0.0_f64, |acc, s| s.map(|s| acc.max(s))),
            Self::Multiple { factor, inner } => {
                if *factor == 0.0 {
                    Some(0.0)
                } else {
                    inner.support_radius()
                }
            }
            Self::Scaled { theta, inner } => inner.support_radius().map(|s| s / theta.sqrt()),
            Self::Cutoff { radius, inside, inner } => {
                if *inside {
                    Some(inner.support_radius().map_or(*radius, |s| s.min(*radius)))
                } else {
                    match inner.support_radius() {
                        Some(s) if s <= *radius => Some(0.0),
                        other => other,
                    }
                }
            }
            Self::Part { inner, .. } => inner.support_radius(),
            Self::Tabulated { radii, values } => {
                let last = values.iter().rposition(|v| *v != 0.0);
                Some(last.map_or(0.0, |i| radii[(i + 1).min(radii.len() - 1)]))
            }
        }
    }

    /// Declared large-|x| decay power; infinite for compact or
    /// super-polynomial profiles.
    pub fn decay_exponent(&self) -> f64 {
        match self {
            Self::Zero | Self::BallWell { .. } | Self::Gaussian { .. } | Self::Tabulated { .. } => f64::INFINITY,
            Self::InverseDecay { eps, .. } => 2.0 + eps,
            Self::Sum { terms } => terms.iter().map(|t| t.decay_exponent()).fold(f64::INFINITY, f64::min),
            Self::Multiple { factor, inner } => {
                if *factor == 0.0 {
                    f64::INFINITY
                } else {
                    inner.decay_exponent()
                }
            }
            Self::Scaled { inner, .. } | Self::Part { inner, .. } => inner.decay_exponent(),
            Self::Cutoff { inside, inner, .. } => {
                if *inside {
                    f64::INFINITY
                } else {
                    inner.decay_exponent()
                }
            }
        }
    }

    /// Whether `|V|` may blow up at the origin.
    pub fn singular_at_origin(&self) -> bool {
        match self {
            Self::InverseDecay { .. } => true,
            Self::Sum { terms } => terms.iter().any(|t| t.singular_at_origin()),
            Self::Multiple { inner, .. } | Self::Scaled { inner, .. } | Self::Part { inner, .. } => {
                inner.singular_at_origin()
            }
            Self::Cutoff { inside, inner, .. } => *inside && inner.singular_at_origin(),
            _ => false,
        }
    }

    /// Radii where a radial profile jumps or kinks.
    pub fn radial_breakpoints(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.collect_breakpoints(1.0, &mut out);
        out.sort_by(|a, b| a.total_cmp(b));
        out.dedup();
        out
    }

    fn collect_breakpoints(&self, scale: f64, out: &mut Vec<f64>) {
        match self {
            Self::BallWell { radius, center, .. } if center.iter().all(|&c| c == 0.0) => out.push(radius * scale),
            Self::Sum { terms } => terms.iter().for_each(|t| t.collect_breakpoints(scale, out)),
            Self::Multiple { inner, .. } | Self::Part { inner, .. } => inner.collect_breakpoints(scale, out),
            Self::Scaled { theta, inner } => inner.collect_breakpoints(scale / theta.sqrt(), out),
            Self::Cutoff { radius, inner, .. } => {
                out.push(radius * scale);
                inner.collect_breakpoints(scale, out)
            }
            Self::Tabulated { radii, .. } => out.extend(radii.iter().map(|r| r * scale)),
            _ => {}
        }
    }

    /// Upper bound for `sup_{|y|=s} |V(y)|` at large `s`, used for tails.
    pub fn radial_abs_bound(&self, s: f64) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::BallWell { radius, depth, center } => {
                if s - norm3(*center) < *radius {
                    depth.abs()
                } else {
                    0.0
                }
            }
            Self::Gaussian {
                width,
                amplitude,
                center,
            } => {
                let d = (s - norm3(*center)).max(0.0);
                amplitude.abs() * (-(d / width).powi(2)).exp()
            }
            Self::InverseDecay { c, eps } => c.abs() / (s.powf(2.0 + eps) + s.powf(2.0 - eps)),
            Self::Sum { terms } => terms.iter().map(|t| t.radial_abs_bound(s)).sum(),
            Self::Multiple { factor, inner } => factor.abs() * inner.radial_abs_bound(s),
            Self::Scaled { theta, inner } => theta * inner.radial_abs_bound(theta.sqrt() * s),
            Self::Cutoff { radius, inside, inner } => {
                if (s < *radius) == *inside {
                    inner.radial_abs_bound(s)
                } else {
                    0.0
                }
            }
            Self::Part { inner, .. } => inner.radial_abs_bound(s),
            Self::Tabulated { radii, values } => {
                let i = radii.partition_point(|&r| r < s);
                values[i.saturating_sub(1)..]
                    .iter()
                    .fold(0.0_f64, |m, v| m.max(v.abs()))
            }
        }
    }

    /// Bound for the tail moment `∫_R^∞ sup_{|y|=s}|V(y)| s ds`.
    pub fn tail_moment(&self, r: f64) -> f64 {
        match self {
            Self::Zero | Self::BallWell { .. } | Self::Tabulated { .. } => {
                if self.support_radius().is_some_and(|s| s <= r) {
                    0.0
                } else {
                    let s = self.support_radius().unwrap_or(r);
                    self.radial_abs_bound(r) * 0.5 * (s * s - r * r).max(0.0)
                }
            }
            Self::Gaussian {
                width,
                amplitude,
                center,
            } => {
                let c = norm3(*center);
                let d = (r - c).max(0.0);
                // ∫_d^∞ e^{-u²/w²} (u + c) du
                let w = *width;
                let e = (-(d / w).powi(2)).exp();
                amplitude.abs()
                    * (0.5 * w * w * e + c * 0.5 * w * std::f64::consts::PI.sqrt() * statrs::function::erf::erfc(d / w))
            }
            Self::InverseDecay { c, eps } => {
                if r >= 1.0 {
                    c.abs() * r.powf(-eps) / eps
                } else {
                    // split at 1: inner piece bounded by ∫_r^1 c s^{-1+eps} ds
                    c.abs() * ((1.0 - r.powf(*eps)) / eps + 1.0 / eps)
                }
            }
            Self::Sum { terms } => terms.iter().map(|t| t.tail_moment(r)).sum(),
            Self::Multiple { factor, inner } => factor.abs() * inner.tail_moment(r),
            Self::Scaled { theta, inner } => inner.tail_moment(theta.sqrt() * r),
            Self::Cutoff { radius, inside, inner } => {
                if *inside {
                    if r >= *radius {
                        0.0
                    } else {
                        inner.tail_moment(r)
                    }
                } else {
                    inner.tail_moment(r.max(*radius))
                }
            }
            Self::Part { inner, .. } => inner.tail_moment(r),
        }
    }

    /// `∫_a^b g(V(s)) w(s) ds` along a ray for a radial spec, where `g`
    /// is either the absolute value or the identity. Breakpoints split the
    /// interval; a singular origin is handled by dyadic grading. Fails with
    /// the (coarse, fine) partial sums when the graded origin integral does
    /// not settle.
    pub(crate) fn radial_integral(
        &self,
        a: f64,
        b: f64,
        absolute: bool,
        weight: &dyn Fn(f64) -> f64,
    ) -> Result<f64, (f64, f64)> {
        if b <= a {
            return Ok(0.0);
        }
        let mut cuts = vec![a];
        cuts.extend(self.radial_breakpoints().into_iter().filter(|&p| p > a && p < b));
        cuts.push(b);
        let f = |s: f64| {
            let v = self.radial(s);
            (if absolute { v.abs() } else { v }) * weight(s)
        };
        let mut total = 0.0;
        for (k, w) in cuts.windows(2).enumerate() {
            let (lo, hi) = (w[0], w[1]);
            if k == 0 && lo == 0.0 && self.singular_at_origin() {
                total += graded_origin_integral(&f, hi)?;
            } else {
                total += gl8(&f, lo, hi);
            }
        }
        Ok(total)
    }
}

fn tabulated(radii: &[f64], values: &[f64], r: f64) -> f64 {
    if radii.is_empty() || r > radii[radii.len() - 1] {
        return 0.0;
    }
    if r <= radii[0] {
        return values[0];
    }
    let i = radii.partition_point(|&x| x < r);
    let (r0, r1) = (radii[i - 1], radii[i]);
    let t = (r - r0) / (r1 - r0);
    values[i - 1] * (1.0 - t) + values[i] * t
}

thread_local! {
    static GL8: (Vec<f64>, Vec<f64>) = gauss_legendre(8);
}

pub(crate) fn gl8(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    GL8.with(|(x, w)| {
        let half = 0.5 * (b - a);
        let mid = a + half;
        x.iter().zip(w).map(|(xi, wi)| wi * f(mid + half * xi)).sum::<f64>() * half
    })
}

/// `∫_0^b f` over dyadic pieces `[b 2^{-k-1}, b 2^{-k}]`. Once the pieces
/// shrink geometrically the remainder is summed in closed form; pieces that
/// refuse to shrink signal a non-integrable singularity.
fn graded_origin_integral(f: &dyn Fn(f64) -> f64, b: f64) -> Result<f64, (f64, f64)> {
    const LEVELS: usize = 400;
    let mut total = 0.0;
    let mut half_way = 0.0;
    let mut previous = f64::NAN;
    let mut hi = b;
    for level in 0..LEVELS {
        let lo = 0.5 * hi;
        let piece = gl8(f, lo, hi);
        total += piece;
        if piece == 0.0 {
            return Ok(total);
        }
        let q = piece / previous;
        if level >= 8 && q.is_finite() && (0.0..0.99).contains(&q) {
            let remainder = piece * q / (1.0 - q);
            if remainder.abs() <= 1e-10 * total.abs() {
                return Ok(total + remainder);
            }
        }
        if level + 1 == LEVELS / 2 {
            half_way = total;
        }
        previous = piece;
        hi = lo;
    }
    Err((half_way, total))
}

/// Standard catalog used by the experiments and the Lorentz-domination fit.
pub fn catalog() -> Vec<(String, PotentialSpec)> {
    vec![
        ("zero".into(), PotentialSpec::Zero),
        ("unit_ball".into(), PotentialSpec::ball_indicator(1.0)),
        ("well_g0.4".into(), PotentialSpec::ball_well(1.0, 0.4)),
        ("well_g0.9".into(), PotentialSpec::ball_well(1.0, 0.9)),
        ("barrier_g1".into(), PotentialSpec::ball_well(1.0, -1.0)),
        ("gaussian".into(), PotentialSpec::gaussian(1.0, 1.0)),
        ("gaussian_wide".into(), PotentialSpec::gaussian(2.0, -0.3)),
        ("inverse_decay".into(), PotentialSpec::InverseDecay { c: 0.2, eps: 0.5 }),
        (
            "shell".into(),
            PotentialSpec::ball_indicator(2.0).plus(&PotentialSpec::ball_indicator(1.0).times(-1.0)),
        ),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ball_well_sign_convention() {
        let v = PotentialSpec::ball_well(1.0, 0.9);
        assert_eq!(v.eval([0.5, 0.0, 0.0]), -0.9);
        assert_eq!(v.eval([1.5, 0.0, 0.0]), 0.0);
        assert_eq!(v.support_radius(), Some(1.0));
    }

    #[test]
    fn scaled_ball_shrinks_and_deepens() {
        let v = PotentialSpec::ball_indicator(1.0).scaled(4.0);
        assert_eq!(v.radial(0.4), 4.0);
        assert_eq!(v.radial(0.6), 0.0);
        assert_eq!(v.support_radius(), Some(0.5));
        assert_eq!(v.radial_breakpoints(), vec![0.5]);
    }

    #[test]
    fn inverse_decay_shape() {
        let v = PotentialSpec::InverseDecay { c: 1.0, eps: 0.5 };
        assert!((v.radial(1.0) - 0.5).abs() < 1e-15);
        assert!(v.singular_at_origin());
        assert_eq!(v.decay_exponent(), 2.5);
        assert!(v.support_radius().is_none());
    }

    #[test]
    fn tail_moment_bounds_numeric_tail() {
        let g = PotentialSpec::gaussian(1.0, 2.0);
        let numeric = crate::quad::integrate(|s| g.radial(s).abs() * s, 3.0, 12.0, 10, 40);
        assert!((g.tail_moment(3.0) - numeric).abs() < 1e-12);
        let d = PotentialSpec::InverseDecay { c: 1.0, eps: 0.5 };
        let numeric = crate::quad::integrate(|s| d.radial(s) * s, 2.0, 2e4, 10, 4000);
        assert!(d.tail_moment(2.0) >= numeric);
    }

    #[test]
    fn serde_roundtrip_of_nested_spec() {
        let v = PotentialSpec::ball_well(1.0, 0.4)
            .plus(&PotentialSpec::gaussian(0.5, 0.1))
            .scaled(0.25);
        let text = serde_json::to_string(&v).unwrap();
        assert!(text.contains("\"kind\":\"scaled\""));
        let back: PotentialSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, v);
    }

    fn arb_spec() -> impl Strategy<Value = PotentialSpec> {
        prop_oneof![
            (0.1f64..3.0, -3.0f64..3.0).prop_map(|(r, d)| PotentialSpec::ball_well(r, d)),
            (0.1f64..3.0, -3.0f64..3.0).prop_map(|(w, a)| PotentialSpec::gaussian(w, a)),
            (0.1f64..2.0, 0.1f64..1.5).prop_map(|(c, eps)| PotentialSpec::InverseDecay { c, eps }),
        ]
        .prop_recursive(2, 6, 3, |inner| {
            prop_oneof![
                prop::collection::vec(inner.clone(), 1..3).prop_map(|terms| PotentialSpec::Sum { terms }),
                (inner.clone(), 0.2f64..5.0).prop_map(|(v, t)| v.scaled(t)),
                (inner, 0.1f64..3.0, any::<bool>()).prop_map(|(v, r, inside)| PotentialSpec::Cutoff {
                    radius: r,
                    inside,
                    inner: Box::new(v)
                }),
            ]
        })
    }

    proptest! {
        #[test]
        fn sign_parts_recombine(v in arb_spec(), x in prop::array::uniform3(-4.0f64..4.0)) {
            prop_assume!(norm3(x) > 1e-6);
            let total = v.eval(x);
            let pos = v.positive_part().eval(x);
            let neg = v.negative_part().eval(x);
            prop_assert!(pos >= 0.0 && neg >= 0.0);
            prop_assert!((total - (pos - neg)).abs() <= 1e-12 * (1.0 + total.abs()));
        }

        #[test]
        fn radial_specs_depend_only_on_radius(v in arb_spec(), r in 0.01f64..4.0, th in 0.0f64..3.1, ph in 0.0f64..6.2) {
            prop_assert!(v.is_radial());
            let p = [r * th.sin() * ph.cos(), r * th.sin() * ph.sin(), r * th.cos()];
            let a = v.eval(p);
            let b = v.radial(norm3(p));
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
        }

        #[test]
        fn split_recombines(v in arb_spec(), r in 0.0f64..3.0, x in prop::array::uniform3(-4.0f64..4.0)) {
            prop_assume!(norm3(x) > 1e-6);
            let (v1, v2) = split_potential(&v, r);
            let sum = v1.eval(x) + v2.eval(x);
            prop_assert!((sum - v.eval(x)).abs() <= 1e-12 * (1.0 + sum.abs()));
        }
    }
}
