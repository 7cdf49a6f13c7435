//! Runtime scalars and the comparison rules shared by the formula engine and
//! the relational oracle.
//!
//! Both sides of the differential check call into [`compare`] and
//! [`is_truthy`], so a disagreement between them is always a compiler or
//! engine defect rather than two diverging notions of equality.

use std::cmp::Ordering;
use std::fmt;

/// Spreadsheet error values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ErrorKind {
    NA,
    Value,
    Ref,
    Name,
    Div0,
    Circ,
}

impl ErrorKind {
    pub fn token(self) -> &'static str {
        match self {
            ErrorKind::NA => "#N/A",
            ErrorKind::Value => "#VALUE!",
            ErrorKind::Ref => "#REF!",
            ErrorKind::Name => "#NAME?",
            ErrorKind::Div0 => "#DIV/0!",
            ErrorKind::Circ => "#CIRC!",
        }
    }

    pub fn from_token(token: &str) -> Option<Self> {
        Some(match token {
            "#N/A" => ErrorKind::NA,
            "#VALUE!" => ErrorKind::Value,
            "#REF!" => ErrorKind::Ref,
            "#NAME?" => ErrorKind::Name,
            "#DIV/0!" => ErrorKind::Div0,
            "#CIRC!" => ErrorKind::Circ,
            _ => return None,
        })
    }
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Number(f64),
    Text(String),
    Bool(bool),
    Error(ErrorKind),
}

impl Value {
    pub fn is_error(&self) -> bool {
        matches!(self, Value::Error(_))
    }

    pub fn is_na(&self) -> bool {
        matches!(self, Value::Error(ErrorKind::NA))
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            Value::Number(n) => Some(*n),
            _ => None,
        }
    }

    /// Bitwise identity, used for determinism checks (`-0.0` differs from `0.0`).
    pub fn bit_identical(&self, other: &Value) -> bool {
        match (self, other) {
            (Value::Number(a), Value::Number(b)) => a.to_bits() == b.to_bits(),
            (a, b) => a == b,
        }
    }

    /// Text form used by `&` and by the values output file.
    pub fn canonical_text(&self) -> String {
        match self {
            Value::Number(n) => format_number(*n),
            Value::Text(s) => s.clone(),
            Value::Bool(true) => "TRUE".to_string(),
            Value::Bool(false) => "FALSE".to_string(),
            Value::Error(e) => e.token().to_string(),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical_text())
    }
}

impl From<f64> for Value {
    fn from(n: f64) -> Self {
        Value::Number(n)
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Text(s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "<>",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    pub const ALL: [CmpOp; 6] = [
        CmpOp::Eq,
        CmpOp::Ne,
        CmpOp::Lt,
        CmpOp::Le,
        CmpOp::Gt,
        CmpOp::Ge,
    ];

    fn holds(self, ord: Ordering) -> bool {
        match self {
            CmpOp::Eq => ord == Ordering::Equal,
            CmpOp::Ne => ord != Ordering::Equal,
            CmpOp::Lt => ord == Ordering::Less,
            CmpOp::Le => ord != Ordering::Greater,
            CmpOp::Gt => ord == Ordering::Greater,
            CmpOp::Ge => ord != Ordering::Less,
        }
    }
}

/// Case-insensitive text ordering.
pub fn cmp_text(a: &str, b: &str) -> Ordering {
    if a.eq_ignore_ascii_case(b) {
        return Ordering::Equal;
    }
    a.to_lowercase().cmp(&b.to_lowercase())
}

pub fn text_eq(a: &str, b: &str) -> bool {
    cmp_text(a, b) == Ordering::Equal
}

/// Numbers compare by value, so `-0.0 == 0.0`. Inputs are always finite.
pub fn cmp_number(a: f64, b: f64) -> Ordering {
    a.partial_cmp(&b).unwrap_or(Ordering::Equal)
}

/// Evaluates `l op r`.
///
/// Errors propagate (left operand first). Operands of different types are
/// never equal: `=` yields FALSE, `<>` yields TRUE, and the ordering
/// operators yield `#VALUE!`.
pub fn compare(op: CmpOp, l: &Value, r: &Value) -> Value {
    if let Value::Error(e) = l {
        return Value::Error(*e);
    }
    if let Value::Error(e) = r {
        return Value::Error(*e);
    }
    let ord = match (l, r) {
        (Value::Number(a), Value::Number(b)) => cmp_number(*a, *b),
        (Value::Text(a), Value::Text(b)) => cmp_text(a, b),
        (Value::Bool(a), Value::Bool(b)) => a.cmp(b),
        _ => {
            return match op {
                CmpOp::Eq => Value::Bool(false),
                CmpOp::Ne => Value::Bool(true),
                _ => Value::Error(ErrorKind::Value),
            }
        }
    };
    Value::Bool(op.holds(ord))
}

/// Condition semantics of IF: booleans as-is, numbers by non-zero-ness.
pub fn is_truthy(v: &Value) -> Result<bool, ErrorKind> {
    match v {
        Value::Bool(b) => Ok(*b),
        Value::Number(n) => Ok(*n != 0.0),
        Value::Text(_) => Err(ErrorKind::Value),
        Value::Error(e) => Err(*e),
    }
}

/// Strict decimal grammar: `[+-]? (digits [. digits?] | . digits) ([eE] [+-]? digits)?`.
///
/// Rejects `inf`, `NaN`, hex, surrounding whitespace and thousands separators,
/// all of which `f64::from_str` would partly accept.
pub fn parse_decimal(s: &str) -> Option<f64> {
    let b = s.as_bytes();
    let mut i = 0;
    if i < b.len() && (b[i] == b'+' || b[i] == b'-') {
        i += 1;
    }
    let int_start = i;
    while i < b.len() && b[i].is_ascii_digit() {
        i += 1;
    }
    let int_digits = i - int_start;
    let mut frac_digits = 0;
    if i < b.len() && b[i] == b'.' {
        i += 1;
        let frac_start = i;
        while i < b.len() && b[i].is_ascii_digit() {
            i += 1;
        }
        frac_digits = i - frac_start;
    }
    if int_digits == 0 && frac_digits == 0 {
        return None;
    }
    if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
        i += 1;
        if i < b.len() && (b[i] == b'+' || b[i] == b'-') {
            i += 1;
        }
        let exp_start = i;
        while i < b.len() && b[i].is_ascii_digit() {
            i += 1;
        }
        if i == exp_start {
            return None;
        }
    }
    if i != b.len() {
        return None;
    }
    s.parse::<f64>().ok().filter(|n| n.is_finite())
}

/// Renders a number with at most 15 significant digits and no trailing zeros.
///
/// Plain notation is used for decimal exponents in `-9..=14`, scientific
/// (`1.5E+20`) outside that window.
pub fn format_number(n: f64) -> String {
    if n == 0.0 {
        return "0".to_string();
    }
    if !n.is_finite() {
        return if n.is_nan() {
            "NaN".into()
        } else if n > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{:.14e}", n);
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    let negative = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(|c| c.is_ascii_digit()).collect();
    let digits = digits.trim_end_matches('0');
    let digits = if digits.is_empty() { "0" } else { digits };
    let sign = if negative { "-" } else { "" };

    if !(-9..=14).contains(&exp) {
        let (head, tail) = digits.split_at(1);
        let frac = if tail.is_empty() {
            String::new()
        } else {
            format!(".{tail}")
        };
        let esign = if exp < 0 { '-' } else { '+' };
        return format!("{sign}{head}{frac}E{esign}{:02}", exp.abs());
    }
    let body = if exp < 0 {
        format!("0.{}{}", "0".repeat((-exp - 1) as usize), digits)
    } else {
        let point = exp as usize + 1;
        if digits.len() <= point {
            format!("{}{}", digits, "0".repeat(point - digits.len()))
        } else {
            format!("{}.{}", &digits[..point], &digits[point..])
        }
    };
    format!("{sign}{body}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimal_grammar() {
        assert_eq!(parse_decimal("422"), Some(422.0));
        assert_eq!(parse_decimal("-1.5"), Some(-1.5));
        assert_eq!(parse_decimal(".5"), Some(0.5));
        assert_eq!(parse_decimal("5."), Some(5.0));
        assert_eq!(parse_decimal("1e3"), Some(1000.0));
        for bad in [
            "",
            "-",
            ".",
            "inf",
            "NaN",
            " 1",
            "1 ",
            "$15,000.00",
            "1,000",
            "0x10",
            "1e",
            "e5",
        ] {
            assert_eq!(parse_decimal(bad), None, "{bad:?}");
        }
    }

    #[test]
    fn number_formatting() {
        assert_eq!(format_number(6972.0), "6972");
        assert_eq!(format_number(25143.16), "25143.16");
        assert_eq!(format_number(0.1 + 0.2), "0.3");
        assert_eq!(format_number(-0.5), "-0.5");
        assert_eq!(format_number(1e20), "1E+20");
        assert_eq!(format_number(1.5e-12), "1.5E-12");
        assert_eq!(format_number(123456789012345.0), "123456789012345");
        assert_eq!(format_number(0.000001), "0.000001");
        assert_eq!(format_number(-0.0), "0");
    }

    #[test]
    fn comparison_rules() {
        assert_eq!(
            compare(CmpOp::Eq, &"GPI".into(), &"gpi".into()),
            Value::Bool(true)
        );
        assert_eq!(
            compare(CmpOp::Eq, &1.0.into(), &"1".into()),
            Value::Bool(false)
        );
        assert_eq!(
            compare(CmpOp::Ne, &1.0.into(), &"1".into()),
            Value::Bool(true)
        );
        assert_eq!(
            compare(CmpOp::Lt, &1.0.into(), &"1".into()),
            Value::Error(ErrorKind::Value)
        );
        assert_eq!(
            compare(CmpOp::Lt, &"abc".into(), &"ABD".into()),
            Value::Bool(true)
        );
        assert_eq!(
            compare(
                CmpOp::Eq,
                &Value::Error(ErrorKind::NA),
                &Value::Error(ErrorKind::Ref)
            ),
            Value::Error(ErrorKind::NA)
        );
        assert_eq!(
            compare(CmpOp::Ge, &(-0.0).into(), &0.0.into()),
            Value::Bool(true)
        );
    }

    #[test]
    fn truthiness() {
        assert_eq!(is_truthy(&Value::Number(2.0)), Ok(true));
        assert_eq!(is_truthy(&Value::Number(0.0)), Ok(false));
        assert_eq!(is_truthy(&"x".into()), Err(ErrorKind::Value));
        assert_eq!(is_truthy(&Value::Error(ErrorKind::NA)), Err(ErrorKind::NA));
    }
}
