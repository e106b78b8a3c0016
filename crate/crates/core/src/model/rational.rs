//! Exact rational helpers.
//!
//! Every numeric quantity in the crate (weights, costs, fractions, shares,
//! subsidies, bounds) is a [`Rational`]: an arbitrary-precision fraction kept
//! in lowest terms with a positive denominator.

use std::fmt;

use num::bigint::BigInt;
use num::{BigRational, One, Signed, ToPrimitive, Zero};

pub type Rational = BigRational;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseRationalError {
    #[error("empty rational token")]
    Empty,
    #[error("invalid rational token `{0}`")]
    Invalid(String),
    #[error("zero denominator in `{0}`")]
    ZeroDenominator(String),
}

/// `numer / denom` as an exact rational. Panics if `denom == 0`.
pub fn ratio(numer: i64, denom: i64) -> Rational {
    Rational::new(BigInt::from(numer), BigInt::from(denom))
}

pub fn int(value: i64) -> Rational {
    Rational::from_integer(BigInt::from(value))
}

pub fn positive_part(value: &Rational) -> Rational {
    if value.is_positive() {
        value.clone()
    } else {
        Rational::zero()
    }
}

fn parse_integer(digits: &str, original: &str) -> Result<BigInt, ParseRationalError> {
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(ParseRationalError::Invalid(original.to_string()));
    }
    digits
        .parse::<BigInt>()
        .map_err(|_| ParseRationalError::Invalid(original.to_string()))
}

/// Parses `"p/q"`, `"p"` or a plain decimal such as `"0.7"` or `"-.25"`.
///
/// Decimals are converted through a power-of-ten denominator and never touch
/// binary floating point.
pub fn parse_rational(text: &str) -> Result<Rational, ParseRationalError> {
    let token = text.trim();
    if token.is_empty() {
        return Err(ParseRationalError::Empty);
    }
    let (negative, body) = match token.as_bytes()[0] {
        b'-' => (true, &token[1..]),
        b'+' => (false, &token[1..]),
        _ => (false, token),
    };
    let value = if let Some((numer, denom)) = body.split_once('/') {
        let numer = parse_integer(numer.trim(), token)?;
        let denom = parse_integer(denom.trim(), token)?;
        if denom.is_zero() {
            return Err(ParseRationalError::ZeroDenominator(token.to_string()));
        }
        Rational::new(numer, denom)
    } else if let Some((whole, frac)) = body.split_once('.') {
        if whole.is_empty() && frac.is_empty() {
            return Err(ParseRationalError::Invalid(token.to_string()));
        }
        let whole = if whole.is_empty() {
            BigInt::zero()
        } else {
            parse_integer(whole, token)?
        };
        let frac_value = if frac.is_empty() {
            BigInt::zero()
        } else {
            parse_integer(frac, token)?
        };
        let scale = num::pow(BigInt::from(10u32), frac.len());
        Rational::new(whole * &scale + frac_value, scale)
    } else {
        Rational::from_integer(parse_integer(body, token)?)
    };
    Ok(if negative { -value } else { value })
}

/// Lowest-terms text form: `"p/q"`, or `"p"` when the denominator is one.
pub fn format_rational(value: &Rational) -> String {
    value.to_string()
}

/// Decimal rendering rounded half away from zero to `digits` places.
pub fn format_decimal(value: &Rational, digits: usize) -> String {
    let scale = num::pow(BigInt::from(10u32), digits);
    let scaled = value.abs() * Rational::from_integer(scale.clone());
    let rounded = (scaled + ratio(1, 2)).floor().to_integer();
    let whole = &rounded / &scale;
    let frac = &rounded % &scale;
    let sign = if value.is_negative() && !rounded.is_zero() {
        "-"
    } else {
        ""
    };
    if digits == 0 {
        format!("{sign}{whole}")
    } else {
        format!("{sign}{whole}.{:0>width$}", frac.to_string(), width = digits)
    }
}

/// Lossy view for diagnostics and CSV output only.
pub fn to_f64(value: &Rational) -> f64 {
    value.to_f64().unwrap_or(f64::NAN)
}

pub fn sum<'a>(values: impl IntoIterator<Item = &'a Rational>) -> Rational {
    values
        .into_iter()
        .fold(Rational::zero(), |acc, value| acc + value)
}

pub fn is_unit_interval(value: &Rational) -> bool {
    !value.is_negative() && value <= &Rational::one()
}

/// Display adapter that prints a rational in its canonical text form.
pub struct Exact<'a>(pub &'a Rational);

impl fmt::Display for Exact<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_rational(self.0))
    }
}
