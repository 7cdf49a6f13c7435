//! The builtin vocabulary: IF, MATCH (exact), INDEX, RANK.EQ and the operators.
//!
//! Range arguments arrive as flattened slices; `None` marks a blank cell.

use crate::formula::BinOp;
use crate::value::{cmp_number, compare, is_truthy, text_eq, ErrorKind, Value};

pub fn fn_if(cond: &Value, then: &Value, otherwise: &Value) -> Value {
    match is_truthy(cond) {
        Ok(true) => then.clone(),
        Ok(false) => otherwise.clone(),
        Err(e) => Value::Error(e),
    }
}

fn lookup_eq(needle: &Value, item: &Value) -> bool {
    match (needle, item) {
        (Value::Number(a), Value::Number(b)) => a == b,
        (Value::Text(a), Value::Text(b)) => text_eq(a, b),
        (Value::Bool(a), Value::Bool(b)) => a == b,
        _ => false,
    }
}

/// 1-based position of the first element equal to `needle`, or `#N/A`.
///
/// Only `match_type = 0` (exact) is supported; anything else is `#VALUE!`.
/// `is_1d` reports whether the source range was a single row or column.
pub fn fn_match_exact(
    needle: &Value,
    range: &[Option<Value>],
    is_1d: bool,
    match_type: &Value,
) -> Value {
    if let Value::Error(e) = needle {
        return Value::Error(*e);
    }
    match match_type {
        Value::Error(e) => return Value::Error(*e),
        Value::Number(n) if *n == 0.0 => {}
        _ => return Value::Error(ErrorKind::Value),
    }
    if !is_1d {
        return Value::Error(ErrorKind::NA);
    }
    range
        .iter()
        .position(|item| item.as_ref().is_some_and(|v| lookup_eq(needle, v)))
        .map(|i| Value::Number((i + 1) as f64))
        .unwrap_or(Value::Error(ErrorKind::NA))
}

/// Resolves an INDEX position argument to a 0-based offset into `len` elements.
pub fn index_offset(len: usize, n: &Value) -> Result<usize, ErrorKind> {
    let n = match n {
        Value::Number(n) => n.trunc(),
        Value::Error(e) => return Err(*e),
        Value::Text(_) | Value::Bool(_) => return Err(ErrorKind::Value),
    };
    if n < 1.0 || n > len as f64 {
        return Err(ErrorKind::Ref);
    }
    Ok(n as usize - 1)
}

/// Element `n` (1-based, truncated) of a 1-D range. Blank cells read as 0.
pub fn fn_index(range: &[Option<Value>], is_1d: bool, n: &Value) -> Value {
    if let Value::Error(e) = n {
        return Value::Error(*e);
    }
    if !is_1d {
        return Value::Error(ErrorKind::Ref);
    }
    match index_offset(range.len(), n) {
        Ok(i) => range[i].clone().unwrap_or(Value::Number(0.0)),
        Err(e) => Value::Error(e),
    }
}

/// `1 + |{y in range : y strictly better than x}|`, where better means
/// greater for `order = 0` and smaller otherwise. Non-numbers in the range
/// are ignored; `x` must itself occur in the range.
pub fn fn_rank_eq(x: &Value, range: &[Option<Value>], order: &Value) -> Value {
    let x = match x {
        Value::Number(n) => *n,
        Value::Error(e) => return Value::Error(*e),
        Value::Text(_) | Value::Bool(_) => return Value::Error(ErrorKind::Value),
    };
    let ascending = match order {
        Value::Number(n) => *n != 0.0,
        Value::Error(e) => return Value::Error(*e),
        Value::Text(_) | Value::Bool(_) => return Value::Error(ErrorKind::Value),
    };
    let mut better = 0usize;
    let mut present = false;
    for y in range
        .iter()
        .filter_map(|v| v.as_ref().and_then(Value::as_number))
    {
        match cmp_number(y, x) {
            std::cmp::Ordering::Equal => present = true,
            std::cmp::Ordering::Greater if !ascending => better += 1,
            std::cmp::Ordering::Less if ascending => better += 1,
            _ => {}
        }
    }
    if !present {
        return Value::Error(ErrorKind::NA);
    }
    Value::Number((better + 1) as f64)
}

pub fn eval_binary(op: BinOp, l: &Value, r: &Value) -> Value {
    if let Value::Error(e) = l {
        return Value::Error(*e);
    }
    if let Value::Error(e) = r {
        return Value::Error(*e);
    }
    match op {
        BinOp::Cmp(c) => compare(c, l, r),
        BinOp::Concat => Value::Text(l.canonical_text() + &r.canonical_text()),
        BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div => {
            let (Value::Number(a), Value::Number(b)) = (l, r) else {
                return Value::Error(ErrorKind::Value);
            };
            let out = match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div if *b == 0.0 => return Value::Error(ErrorKind::Div0),
                BinOp::Div => a / b,
                _ => unreachable!(),
            };
            if out.is_finite() {
                Value::Number(out)
            } else {
                Value::Error(ErrorKind::Value)
            }
        }
    }
}

pub fn eval_neg(v: &Value) -> Value {
    match v {
        Value::Number(n) => Value::Number(-n),
        Value::Error(e) => Value::Error(*e),
        _ => Value::Error(ErrorKind::Value),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::value::CmpOp;
    use proptest::prelude::*;

    fn nums(v: &[f64]) -> Vec<Option<Value>> {
        v.iter().map(|&n| Some(Value::Number(n))).collect()
    }

    const NA: Value = Value::Error(ErrorKind::NA);

    #[test]
    fn if_semantics() {
        let (one, zero) = (Value::Number(1.0), Value::Number(0.0));
        assert_eq!(fn_if(&Value::Bool(true), &one, &zero), one);
        assert_eq!(fn_if(&Value::Bool(false), &one, &zero), zero);
        assert_eq!(fn_if(&NA, &one, &zero), NA);
        assert_eq!(fn_if(&Value::Number(-2.0), &one, &zero), one);
        assert_eq!(
            fn_if(&"x".into(), &one, &zero),
            Value::Error(ErrorKind::Value)
        );
    }

    #[test]
    fn match_first_occurrence() {
        let zero = Value::Number(0.0);
        // Running sums of a selection indicator.
        let seq = nums(&[0.0, 0.0, 1.0, 1.0, 2.0, 2.0, 2.0]);
        assert_eq!(
            fn_match_exact(&Value::Number(2.0), &seq, true, &zero),
            Value::Number(5.0)
        );
        assert_eq!(
            fn_match_exact(&Value::Number(9.0), &nums(&[1.0, 7.0]), true, &zero),
            NA
        );
        let xs = vec![Some(Value::from("x")), Some(Value::from("x"))];
        assert_eq!(
            fn_match_exact(&"x".into(), &xs, true, &zero),
            Value::Number(1.0)
        );
        assert_eq!(
            fn_match_exact(&"X".into(), &xs, true, &zero),
            Value::Number(1.0)
        );
        assert_eq!(
            fn_match_exact(&Value::Error(ErrorKind::Ref), &xs, true, &zero),
            Value::Error(ErrorKind::Ref)
        );
        assert_eq!(
            fn_match_exact(&Value::Number(1.0), &[Some("1".into())], true, &zero),
            NA
        );
        assert_eq!(
            fn_match_exact(
                &Value::Number(0.0),
                &[None, Some(Value::Number(0.0))],
                true,
                &zero
            ),
            Value::Number(2.0)
        );
        assert_eq!(
            fn_match_exact(&Value::Number(1.0), &nums(&[1.0]), false, &zero),
            NA
        );
        assert_eq!(
            fn_match_exact(
                &Value::Number(1.0),
                &nums(&[1.0]),
                true,
                &Value::Number(1.0)
            ),
            Value::Error(ErrorKind::Value)
        );
        assert_eq!(
            fn_match_exact(
                &Value::Number(1.0),
                &[Some(NA), Some(Value::Number(1.0))],
                true,
                &zero
            ),
            Value::Number(2.0)
        );
    }

    #[test]
    fn index_bounds() {
        let clubs = nums(&[
            689.0, 711.0, 712.0, 713.0, 714.0, 689.0, 721.0, 722.0, 723.0, 724.0,
        ]);
        assert_eq!(
            fn_index(&clubs, true, &Value::Number(6.0)),
            Value::Number(689.0)
        );
        assert_eq!(
            fn_index(&clubs, true, &Value::Number(2.9)),
            Value::Number(711.0)
        );
        assert_eq!(fn_index(&clubs, true, &NA), NA);
        assert_eq!(
            fn_index(&clubs, true, &Value::Number(11.0)),
            Value::Error(ErrorKind::Ref)
        );
        assert_eq!(
            fn_index(&clubs, true, &Value::Number(0.0)),
            Value::Error(ErrorKind::Ref)
        );
        assert_eq!(
            fn_index(&clubs, true, &Value::Number(0.5)),
            Value::Error(ErrorKind::Ref)
        );
        assert_eq!(
            fn_index(&clubs, true, &"2".into()),
            Value::Error(ErrorKind::Value)
        );
        assert_eq!(
            fn_index(&[None], true, &Value::Number(1.0)),
            Value::Number(0.0)
        );
        assert_eq!(
            fn_index(&clubs, false, &Value::Number(1.0)),
            Value::Error(ErrorKind::Ref)
        );
    }

    #[test]
    fn rank_three_way_tie() {
        let r = nums(&[10.0, 10.0, 10.0, 5.0]);
        let desc = Value::Number(0.0);
        let ranks: Vec<Value> = r
            .iter()
            .map(|x| fn_rank_eq(x.as_ref().unwrap(), &r, &desc))
            .collect();
        assert_eq!(
            ranks,
            nums(&[1.0, 1.0, 1.0, 4.0])
                .into_iter()
                .flatten()
                .collect::<Vec<_>>()
        );
        assert_eq!(
            fn_rank_eq(&Value::Number(5.0), &r, &Value::Number(1.0)),
            Value::Number(1.0)
        );
        assert_eq!(
            fn_rank_eq(&Value::Number(10.0), &r, &Value::Number(1.0)),
            Value::Number(2.0)
        );
        assert_eq!(fn_rank_eq(&Value::Number(7.0), &r, &desc), NA);
        assert_eq!(fn_rank_eq(&NA, &r, &desc), NA);
        assert_eq!(
            fn_rank_eq(&"x".into(), &r, &desc),
            Value::Error(ErrorKind::Value)
        );
        let mixed = vec![
            Some(Value::Number(3.0)),
            Some(NA),
            Some("x".into()),
            None,
            Some(Value::Number(1.0)),
        ];
        assert_eq!(
            fn_rank_eq(&Value::Number(1.0), &mixed, &desc),
            Value::Number(2.0)
        );
    }

    #[test]
    fn binary_ops() {
        let n = |x: f64| Value::Number(x);
        assert_eq!(
            eval_binary(
                BinOp::Add,
                &eval_binary(BinOp::Mul, &n(69.0), &n(100.0)),
                &n(72.0)
            ),
            n(6972.0)
        );
        assert_eq!(
            eval_binary(BinOp::Cmp(CmpOp::Eq), &"GPI".into(), &"gpi".into()),
            Value::Bool(true)
        );
        assert_eq!(
            eval_binary(BinOp::Cmp(CmpOp::Eq), &n(1.0), &"1".into()),
            Value::Bool(false)
        );
        assert_eq!(
            eval_binary(BinOp::Add, &n(1.0), &"1".into()),
            Value::Error(ErrorKind::Value)
        );
        assert_eq!(
            eval_binary(BinOp::Add, &Value::Bool(true), &n(1.0)),
            Value::Error(ErrorKind::Value)
        );
        assert_eq!(
            eval_binary(BinOp::Div, &n(1.0), &n(0.0)),
            Value::Error(ErrorKind::Div0)
        );
        assert_eq!(
            eval_binary(BinOp::Concat, &n(8.0), &"-GPI".into()),
            Value::from("8-GPI")
        );
        assert_eq!(
            eval_binary(
                BinOp::Add,
                &Value::Error(ErrorKind::Ref),
                &Value::Error(ErrorKind::NA)
            ),
            Value::Error(ErrorKind::Ref)
        );
        assert_eq!(
            eval_binary(BinOp::Mul, &n(1e308), &n(10.0)),
            Value::Error(ErrorKind::Value)
        );
        assert_eq!(eval_neg(&n(2.0)), n(-2.0));
    }

    proptest! {
        #[test]
        fn rank_matches_brute_force(
            xs in prop::collection::vec(-5i32..5, 1..40),
            pick in any::<prop::sample::Index>(),
            ascending in any::<bool>(),
        ) {
            let range = nums(&xs.iter().map(|&v| v as f64).collect::<Vec<_>>());
            let x = xs[pick.index(xs.len())] as f64;
            let better = xs.iter().filter(|&&y| if ascending { (y as f64) < x } else { (y as f64) > x }).count();
            let order = Value::Number(if ascending { 1.0 } else { 0.0 });
            prop_assert_eq!(fn_rank_eq(&Value::Number(x), &range, &order), Value::Number((better + 1) as f64));
        }
    }
}
