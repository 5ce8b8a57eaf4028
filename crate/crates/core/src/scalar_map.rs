//! Symbolic descriptions of the scalar function `f` applied to distances.
//!
//! The textual form ("f-spec") used by the CLI:
//!
//! | spec                    | function                              |
//! |-------------------------|---------------------------------------|
//! | `poly:a0,a1,...`        | `sum a_t z^t`                         |
//! | `exp:l`                 | `exp(l z)`                            |
//! | `exppoly:l;a0,a1,...`   | `exp(l z) * sum a_t z^t`              |
//! | `trig:cos[,w]`          | `cos(w z)` (default `w = 1`)          |
//! | `trig:sin[,w]`          | `sin(w z)`                            |
//! | `rat:a0,.../b0,...`     | `(sum a_t z^t) / (sum b_s z^s)`       |
//! | `expoverlin:l,c`        | `exp(l z) / (z + c)`                  |
//! | `expquad:u,v,w`         | `exp(u z^2 + v z + w)`                |
//! | `gauss:s`               | `exp(-z^2 / (2 s^2))`                 |

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{FtfiError, Result};

pub const MAX_DEGREE: usize = 16;
pub const EXP_ARG_LIMIT: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrigKind {
    Sin,
    Cos,
}

pub type TabulatedFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum ScalarMap {
    Polynomial(Vec<f64>),
    Exponential { lambda: f64 },
    ExpTimesPoly { lambda: f64, coeffs: Vec<f64> },
    Trigonometric { kind: TrigKind, frequency: f64 },
    Rational { num: Vec<f64>, den: Vec<f64> },
    ExpOverLinear { lambda: f64, c: f64 },
    ExpQuadratic { u: f64, v: f64, w: f64 },
    Tabulated { label: String, f: TabulatedFn },
}

impl fmt::Debug for ScalarMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ScalarMap({self})")
    }
}

pub(crate) fn horner(coeffs: &[f64], z: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &a| acc * z + a)
}

impl ScalarMap {
    pub fn identity() -> Self {
        ScalarMap::Polynomial(vec![0.0, 1.0])
    }

    pub fn constant(c: f64) -> Self {
        ScalarMap::Polynomial(vec![c])
    }

    pub fn gaussian(sigma: f64) -> Self {
        ScalarMap::ExpQuadratic { u: -1.0 / (2.0 * sigma * sigma), v: 0.0, w: 0.0 }
    }

    pub fn tabulated(label: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        ScalarMap::Tabulated { label: label.into(), f: Arc::new(f) }
    }

    /// Short family name, used in reports.
    pub fn family(&self) -> &'static str {
        match self {
            ScalarMap::Polynomial(_) => "poly",
            ScalarMap::Exponential { .. } => "exp",
            ScalarMap::ExpTimesPoly { .. } => "exppoly",
            ScalarMap::Trigonometric { .. } => "trig",
            ScalarMap::Rational { .. } => "rat",
            ScalarMap::ExpOverLinear { .. } => "expoverlin",
            ScalarMap::ExpQuadratic { .. } => "expquad",
            ScalarMap::Tabulated { .. } => "tab",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |name: &str, xs: &[f64]| -> Result<()> {
            if xs.iter().any(|x| !x.is_finite()) {
                return Err(FtfiError::invalid(format!("{name}: coefficients must be finite")));
            }
            Ok(())
        };
        let degree = |name: &str, xs: &[f64]| -> Result<()> {
            if xs.is_empty() {
                return Err(FtfiError::invalid(format!("{name}: empty coefficient list")));
            }
            if xs.len() > MAX_DEGREE + 1 {
                return Err(FtfiError::invalid(format!(
                    "{name}: degree {} exceeds the maximum of {MAX_DEGREE}",
                    xs.len() - 1
                )));
            }
            check(name, xs)
        };
        match self {
            ScalarMap::Polynomial(a) => degree("poly", a),
            ScalarMap::Exponential { lambda } => check("exp", &[*lambda]),
            ScalarMap::ExpTimesPoly { lambda, coeffs } => {
                check("exppoly", &[*lambda])?;
                degree("exppoly", coeffs)
            }
            ScalarMap::Trigonometric { frequency, .. } => check("trig", &[*frequency]),
            ScalarMap::Rational { num, den } => {
                degree("rat numerator", num)?;
                degree("rat denominator", den)?;
                if den.iter().all(|&b| b == 0.0) {
                    return Err(FtfiError::invalid("rat: denominator is identically zero"));
                }
                Ok(())
            }
            ScalarMap::ExpOverLinear { lambda, c } => check("expoverlin", &[*lambda, *c]),
            ScalarMap::ExpQuadratic { u, v, w } => check("expquad", &[*u, *v, *w]),
            ScalarMap::Tabulated { .. } => Ok(()),
        }
    }

    /// Plain evaluation. May return non-finite values; see [`ScalarMap::try_eval`].
    pub fn eval(&self, z: f64) -> f64 {
        match self {
            ScalarMap::Polynomial(a) => horner(a, z),
            ScalarMap::Exponential { lambda } => (lambda * z).exp(),
            ScalarMap::ExpTimesPoly { lambda, coeffs } => (lambda * z).exp() * horner(coeffs, z),
            ScalarMap::Trigonometric { kind: TrigKind::Cos, frequency } => (frequency * z).cos(),
            ScalarMap::Trigonometric { kind: TrigKind::Sin, frequency } => (frequency * z).sin(),
            ScalarMap::Rational { num, den } => horner(num, z) / horner(den, z),
            ScalarMap::ExpOverLinear { lambda, c } => (lambda * z).exp() / (z + c),
            ScalarMap::ExpQuadratic { u, v, w } => (u * z * z + v * z + w).exp(),
            ScalarMap::Tabulated { f, .. } => f(z),
        }
    }

    /// Exponent fed to `exp` at `z`, for the families that have one.
    fn exp_arg(&self, z: f64) -> Option<f64> {
        match self {
            ScalarMap::Exponential { lambda }
            | ScalarMap::ExpTimesPoly { lambda, .. }
            | ScalarMap::ExpOverLinear { lambda, .. } => Some(lambda * z),
            ScalarMap::ExpQuadratic { u, v, w } => Some(u * z * z + v * z + w),
            _ => None,
        }
    }

    /// Evaluation that reports overflow, poles and non-finite results.
    pub fn try_eval(&self, z: f64) -> Result<f64> {
        if let Some(arg) = self.exp_arg(z) {
            if arg > EXP_ARG_LIMIT {
                return Err(FtfiError::ExpOverflow { arg });
            }
        }
        match self {
            ScalarMap::Rational { den, .. } if horner(den, z) == 0.0 => return Err(FtfiError::Pole { at: z }),
            ScalarMap::ExpOverLinear { c, .. } if z + c == 0.0 => return Err(FtfiError::Pole { at: z }),
            _ => {}
        }
        let value = self.eval(z);
        if value.is_finite() {
            Ok(value)
        } else {
            Err(FtfiError::NonFiniteEval { at: z })
        }
    }
}

fn fmt_list(f: &mut fmt::Formatter<'_>, xs: &[f64]) -> fmt::Result {
    for (i, x) in xs.iter().enumerate() {
        if i > 0 {
            f.write_str(",")?;
        }
        write!(f, "{x}")?;
    }
    Ok(())
}

impl fmt::Display for ScalarMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarMap::Polynomial(a) => {
                f.write_str("poly:")?;
                fmt_list(f, a)
            }
            ScalarMap::Exponential { lambda } => write!(f, "exp:{lambda}"),
            ScalarMap::ExpTimesPoly { lambda, coeffs } => {
                write!(f, "exppoly:{lambda};")?;
                fmt_list(f, coeffs)
            }
            ScalarMap::Trigonometric { kind, frequency } => {
                let name = if *kind == TrigKind::Cos { "cos" } else { "sin" };
                write!(f, "trig:{name},{frequency}")
            }
            ScalarMap::Rational { num, den } => {
                f.write_str("rat:")?;
                fmt_list(f, num)?;
                f.write_str("/")?;
                fmt_list(f, den)
            }
            ScalarMap::ExpOverLinear { lambda, c } => write!(f, "expoverlin:{lambda},{c}"),
            ScalarMap::ExpQuadratic { u, v, w } => write!(f, "expquad:{u},{v},{w}"),
            ScalarMap::Tabulated { label, .. } => write!(f, "tab:{label}"),
        }
    }
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            let t = t.trim();
            t.parse::<f64>().map_err(|_| FtfiError::invalid(format!("bad number {t:?} in f-spec")))
        })
        .collect()
}

fn parse_fixed<const K: usize>(s: &str, what: &str) -> Result<[f64; K]> {
    let xs = parse_list(s)?;
    xs.try_into()
        .map_err(|xs: Vec<f64>| FtfiError::invalid(format!("{what} expects {K} values, got {}", xs.len())))
}

impl FromStr for ScalarMap {
    type Err = FtfiError;

    fn from_str(spec: &str) -> Result<Self> {
        let (head, body) = spec
            .split_once(':')
            .ok_or_else(|| FtfiError::invalid(format!("f-spec {spec:?} has no ':' separator")))?;
        let body = body.trim();
        let map = match head.trim() {
            "poly" => ScalarMap::Polynomial(parse_list(body)?),
            "exp" => ScalarMap::Exponential { lambda: parse_fixed::<1>(body, "exp")?[0] },
            "exppoly" => {
                let (l, a) = body
                    .split_once(';')
                    .ok_or_else(|| FtfiError::invalid("exppoly expects 'lambda;a0,a1,...'"))?;
                ScalarMap::ExpTimesPoly { lambda: parse_fixed::<1>(l, "exppoly")?[0], coeffs: parse_list(a)? }
            }
            "trig" => {
                let (kind, freq) = match body.split_once(',') {
                    Some((k, w)) => (k.trim(), parse_fixed::<1>(w, "trig frequency")?[0]),
                    None => (body, 1.0),
                };
                let kind = match kind {
                    "cos" => TrigKind::Cos,
                    "sin" => TrigKind::Sin,
                    other => return Err(FtfiError::invalid(format!("trig kind must be sin or cos, got {other:?}"))),
                };
                ScalarMap::Trigonometric { kind, frequency: freq }
            }
            "rat" => {
                let (num, den) =
                    body.split_once('/').ok_or_else(|| FtfiError::invalid("rat expects 'a0,.../b0,...'"))?;
                ScalarMap::Rational { num: parse_list(num)?, den: parse_list(den)? }
            }
            "expoverlin" => {
                let [lambda, c] = parse_fixed::<2>(body, "expoverlin")?;
                ScalarMap::ExpOverLinear { lambda, c }
            }
            "expquad" => {
                let [u, v, w] = parse_fixed::<3>(body, "expquad")?;
                ScalarMap::ExpQuadratic { u, v, w }
            }
            "gauss" => {
                let sigma = parse_fixed::<1>(body, "gauss")?[0];
                if !(sigma.is_finite() && sigma > 0.0) {
                    return Err(FtfiError::invalid("gauss sigma must be positive"));
                }
                ScalarMap::gaussian(sigma)
            }
            other => return Err(FtfiError::invalid(format!("unknown f-spec family {other:?}"))),
        };
        map.validate()?;
        Ok(map)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_every_family() {
        let cases = [
            ("poly:1,-0.5,0.25", 2.0, 1.0 - 1.0 + 1.0),
            ("exp:-0.5", 2.0, (-1.0f64).exp()),
            ("exppoly:-1;0,1", 1.0, (-1.0f64).exp()),
            ("trig:cos", 0.0, 1.0),
            ("trig:sin,2", 0.25, 0.5f64.sin()),
            ("rat:1/1,0,1", 1.0, 0.5),
            ("expoverlin:0,2", 2.0, 0.25),
            ("expquad:-0.1,0,0", 1.0, (-0.1f64).exp()),
            ("gauss:1", 1.0, (-0.5f64).exp()),
        ];
        for (spec, z, want) in cases {
            let f: ScalarMap = spec.parse().unwrap();
            assert!((f.eval(z) - want).abs() < 1e-15, "{spec}");
        }
    }

    #[test]
    fn display_round_trips() {
        for spec in ["poly:0,1", "exp:-0.3", "exppoly:0.5;1,2,3", "trig:sin,3", "rat:1,2/3,0,1", "expquad:-1,0.5,2"] {
            let f: ScalarMap = spec.parse().unwrap();
            let g: ScalarMap = f.to_string().parse().unwrap();
            assert_eq!(f.to_string(), g.to_string());
        }
    }

    #[test]
    fn rejects_malformed_specs() {
        for spec in ["", "poly", "poly:", "poly:1,x", "exp:1,2", "trig:tan", "rat:1", "rat:1/0", "gauss:-1", "foo:1"] {
            assert!(spec.parse::<ScalarMap>().is_err(), "{spec}");
        }
        let high = format!("poly:{}", vec!["1"; 18].join(","));
        assert!(high.parse::<ScalarMap>().is_err());
    }

    #[test]
    fn try_eval_guards() {
        let f = ScalarMap::Exponential { lambda: 1.0 };
        assert!(matches!(f.try_eval(701.0), Err(FtfiError::ExpOverflow { .. })));
        assert!(f.try_eval(699.0).is_ok());
        let r: ScalarMap = "rat:1/-1,1".parse().unwrap();
        assert!(matches!(r.try_eval(1.0), Err(FtfiError::Pole { .. })));
        let t = ScalarMap::tabulated("nan", |_| f64::NAN);
        assert!(matches!(t.try_eval(0.0), Err(FtfiError::NonFiniteEval { .. })));
    }
}
