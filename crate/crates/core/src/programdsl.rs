//! The arithmetic answer program format and answer normalization.
//!
//! A program is a comma-separated list of binary steps such as
//! `subtract(100, 80), divide(#0, 80)`. `#k` refers to the result of step
//! `k`, which must come earlier. Literals accept `$`, thousands commas, a
//! trailing `%` (stripped, not rescaled), parenthesized negatives and the
//! dataset constants `const_<n>` / `const_m1`.
//!
//! A comma is read as a thousands separator only when it directly follows a
//! digit and is directly followed by exactly three digits, so `add(1,234)`
//! is the single literal 1234 (and fails arity) while `add(1, 234)` has two
//! arguments.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{AnswerValue, QuestionType};
use crate::numeric::parse_number;
use crate::promptkit::ANSWER_TRIGGER;
use crate::scalar::{decimal_places, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Op {
    Add,
    Subtract,
    Multiply,
    Divide,
    Exp,
    Greater,
}

impl Op {
    pub const ALL: [Op; 6] = [Op::Add, Op::Subtract, Op::Multiply, Op::Divide, Op::Exp, Op::Greater];

    pub fn name(self) -> &'static str {
        match self {
            Op::Add => "add",
            Op::Subtract => "subtract",
            Op::Multiply => "multiply",
            Op::Divide => "divide",
            Op::Exp => "exp",
            Op::Greater => "greater",
        }
    }
}

impl FromStr for Op {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Op::ALL
            .into_iter()
            .find(|op| op.name().eq_ignore_ascii_case(s))
            .ok_or(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Arg<T> {
    Const(T),
    StepRef(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step<T> {
    pub op: Op,
    pub args: [Arg<T>; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Program<T> {
    pub steps: Vec<Step<T>>,
}

impl<T: Scalar> fmt::Display for Arg<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Arg::Const(v) => write!(f, "{v}"),
            Arg::StepRef(i) => write!(f, "#{i}"),
        }
    }
}

impl<T: Scalar> fmt::Display for Program<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.steps.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{}({}, {})", s.op.name(), s.args[0], s.args[1])?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("empty program")]
    Empty,
    #[error("unknown operator `{0}`")]
    UnknownOp(String),
    #[error("`{op}` takes 2 arguments, found {found}")]
    Arity { op: &'static str, found: usize },
    #[error("step {step} references #{target}, which is not an earlier step")]
    ForwardRef { step: usize, target: usize },
    #[error("unparseable literal `{0}`")]
    BadLiteral(String),
    #[error("expected {expected}, found {found}")]
    Unexpected { expected: &'static str, found: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("at byte {pos}: {kind}")]
pub struct ParseError {
    pub pos: usize,
    pub kind: ParseErrorKind,
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Self { src, pos: 0 }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.src.len() - trimmed.len();
    }

    fn err(&self, kind: ParseErrorKind) -> ParseError {
        ParseError { pos: self.pos, kind }
    }

    fn found(&self) -> String {
        self.peek()
            .map_or_else(|| "end of input".to_string(), |c| format!("`{c}`"))
    }

    fn expect(&mut self, c: char, what: &'static str) -> Result<(), ParseError> {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            Ok(())
        } else {
            Err(self.err(ParseErrorKind::Unexpected {
                expected: what,
                found: self.found(),
            }))
        }
    }

    fn ident(&mut self) -> &'a str {
        let rest = self.rest();
        let len = rest
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
            .unwrap_or(rest.len());
        self.pos += len;
        &rest[..len]
    }

    fn step<T: Scalar>(&mut self, index: usize) -> Result<Step<T>, ParseError> {
        self.skip_ws();
        let start = self.pos;
        let name = self.ident();
        if name.is_empty() {
            return Err(self.err(ParseErrorKind::Unexpected {
                expected: "operator",
                found: self.found(),
            }));
        }
        let op = Op::from_str(name).map_err(|_| ParseError {
            pos: start,
            kind: ParseErrorKind::UnknownOp(name.to_string()),
        })?;
        self.expect('(', "`(`")?;
        let mut args = Vec::with_capacity(2);
        loop {
            self.skip_ws();
            if self.peek() == Some(')') && args.is_empty() {
                self.pos += 1;
                break;
            }
            args.push(self.arg(index)?);
            self.skip_ws();
            match self.peek() {
                Some(',') => self.pos += 1,
                Some(')') => {
                    self.pos += 1;
                    break;
                }
                _ => {
                    return Err(self.err(ParseErrorKind::Unexpected {
                        expected: "`,` or `)`",
                        found: self.found(),
                    }))
                }
            }
        }
        let args: [Arg<T>; 2] = args.try_into().map_err(|a: Vec<_>| ParseError {
            pos: start,
            kind: ParseErrorKind::Arity {
                op: op.name(),
                found: a.len(),
            },
        })?;
        Ok(Step { op, args })
    }

    fn arg<T: Scalar>(&mut self, index: usize) -> Result<Arg<T>, ParseError> {
        let start = self.pos;
        if self.peek() == Some('#') {
            self.pos += 1;
            let digits = self.ident();
            let target: usize = digits.parse().map_err(|_| ParseError {
                pos: start,
                kind: ParseErrorKind::BadLiteral(format!("#{digits}")),
            })?;
            if target >= index {
                return Err(ParseError {
                    pos: start,
                    kind: ParseErrorKind::ForwardRef { step: index, target },
                });
            }
            return Ok(Arg::StepRef(target));
        }
        if self.rest().starts_with("const_") {
            let name = self.ident();
            let tail = &name["const_".len()..];
            let value = match tail {
                "m1" => Some(-T::one()),
                _ => tail.parse::<u64>().ok().and_then(T::from_u64),
            };
            return value.map(Arg::Const).ok_or(ParseError {
                pos: start,
                kind: ParseErrorKind::BadLiteral(name.to_string()),
            });
        }
        let lit = self.literal_span();
        if lit.is_empty() {
            return Err(self.err(ParseErrorKind::Unexpected {
                expected: "argument",
                found: self.found(),
            }));
        }
        parse_number::<T>(lit).map(|p| Arg::Const(p.value)).ok_or(ParseError {
            pos: start,
            kind: ParseErrorKind::BadLiteral(lit.to_string()),
        })
    }

    /// Consume the longest run that can belong to a numeric literal.
    fn literal_span(&mut self) -> &'a str {
        let rest = self.rest();
        let b = rest.as_bytes();
        let mut i = 0;
        let paren = b.first() == Some(&b'(');
        if paren {
            i += 1;
        }
        while i < b.len() {
            match b[i] {
                b'0'..=b'9' | b'.' | b'$' | b'-' | b'%' | b' ' if !(b[i] == b' ' && !paren) => i += 1,
                b',' => {
                    let run = b[i + 1..].iter().take_while(|c| c.is_ascii_digit()).count();
                    let thousands = i > 0 && b[i - 1].is_ascii_digit() && run == 3;
                    if thousands {
                        i += 1;
                    } else {
                        break;
                    }
                }
                b')' if paren => {
                    i += 1;
                    break;
                }
                _ => break,
            }
        }
        self.pos += i;
        rest[..i].trim_end()
    }

    /// Parse `step (, step)*`. In prefix mode parsing stops quietly at the
    /// first position that does not continue the program.
    fn program<T: Scalar>(&mut self, prefix: bool) -> Result<Program<T>, ParseError> {
        let mut steps = vec![self.step(0)?];
        loop {
            self.skip_ws();
            let save = self.pos;
            if self.peek() != Some(',') {
                break;
            }
            self.pos += 1;
            if prefix {
                match self.step(steps.len()) {
                    Ok(s) => steps.push(s),
                    Err(_) => {
                        self.pos = save;
                        break;
                    }
                }
            } else {
                steps.push(self.step(steps.len())?);
            }
        }
        Ok(Program { steps })
    }
}

/// Parse a complete program; trailing input is an error.
pub fn parse_program<T: Scalar>(src: &str) -> Result<Program<T>, ParseError> {
    let mut p = Parser::new(src);
    p.skip_ws();
    if p.peek().is_none() {
        return Err(p.err(ParseErrorKind::Empty));
    }
    let prog = p.program(false)?;
    p.skip_ws();
    if p.peek().is_some() {
        return Err(p.err(ParseErrorKind::Unexpected {
            expected: "`,` or end of program",
            found: p.found(),
        }));
    }
    Ok(prog)
}

impl<T: Scalar> FromStr for Program<T> {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_program(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("step {0}: division by zero")]
    DivisionByZero(usize),
    #[error("step {0}: boolean used as a number")]
    BooleanOperand(usize),
    #[error("step {0}: result is not finite")]
    NonFinite(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value<T> {
    Number(T),
    Boolean(bool),
}

impl<T: Scalar> Program<T> {
    /// Evaluate every step; the program's value is the last step's.
    pub fn evaluate(&self) -> Result<Value<T>, EvalError> {
        let mut results: Vec<Value<T>> = Vec::with_capacity(self.steps.len());
        for (i, step) in self.steps.iter().enumerate() {
            let num = |a: &Arg<T>| match *a {
                Arg::Const(v) => Ok(v),
                Arg::StepRef(k) => match results[k] {
                    Value::Number(v) => Ok(v),
                    Value::Boolean(_) => Err(EvalError::BooleanOperand(i)),
                },
            };
            let (a, b) = (num(&step.args[0])?, num(&step.args[1])?);
            let v = match step.op {
                Op::Add => Value::Number(a + b),
                Op::Subtract => Value::Number(a - b),
                Op::Multiply => Value::Number(a * b),
                Op::Divide => {
                    if b == T::zero() {
                        return Err(EvalError::DivisionByZero(i));
                    }
                    Value::Number(a / b)
                }
                Op::Exp => Value::Number(a.powf(b)),
                Op::Greater => Value::Boolean(a > b),
            };
            if let Value::Number(x) = v {
                if !x.is_finite() {
                    return Err(EvalError::NonFinite(i));
                }
            }
            results.push(v);
        }
        Ok(*results.last().expect("programs have at least one step"))
    }
}

/// Evaluate to a normalized answer (`greater` yields yes/no).
pub fn eval_program<T: Scalar>(p: &Program<T>) -> Result<NormalizedAnswer<T>, EvalError> {
    Ok(match p.evaluate()? {
        Value::Number(v) => NormalizedAnswer::number(v),
        Value::Boolean(b) => NormalizedAnswer::Boolean(b),
    })
}

// ---------------------------------------------------------------------------
// answers

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NumberAnswer<T> {
    pub value: T,
    /// Written with a `%` sign.
    #[serde(default)]
    pub percent: bool,
    /// Decimal places as written (drives the comparison tolerance).
    #[serde(default)]
    pub decimals: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum NormalizedAnswer<T> {
    Number(NumberAnswer<T>),
    Text(String),
    Boolean(bool),
}

impl<T: Scalar> NormalizedAnswer<T> {
    pub fn number(v: T) -> Self {
        Self::Number(NumberAnswer {
            value: v,
            percent: false,
            decimals: decimal_places(v),
        })
    }

    /// Normalize free text: yes/no become booleans, numeric strings become
    /// numbers, anything else is lowercased with `.`, `$` and `,` removed.
    pub fn from_text(s: &str) -> Self {
        let t = s.trim();
        let bare = t.trim_end_matches('.').trim();
        match bare.to_lowercase().as_str() {
            "yes" | "true" => return Self::Boolean(true),
            "no" | "false" => return Self::Boolean(false),
            _ => {}
        }
        if let Some(p) = parse_number::<T>(bare) {
            return Self::Number(NumberAnswer {
                value: p.value,
                percent: p.percent,
                decimals: p.decimals,
            });
        }
        Self::Text(normalize_text(t))
    }

    pub fn from_gold(a: &AnswerValue<T>) -> Self {
        match a {
            AnswerValue::Number { number } => Self::number(*number),
            AnswerValue::Text { text } => Self::from_text(text),
        }
    }

    /// String form used for token-level comparison.
    pub fn as_text(&self) -> String {
        match self {
            Self::Number(n) => {
                let s = n.value.to_string();
                if n.percent {
                    format!("{s}%")
                } else {
                    s
                }
            }
            Self::Text(t) => t.clone(),
            Self::Boolean(true) => "yes".into(),
            Self::Boolean(false) => "no".into(),
        }
    }
}

/// Lowercase, drop `.`, `$` and `,`, collapse whitespace.
pub fn normalize_text(s: &str) -> String {
    s.to_lowercase()
        .chars()
        .filter(|c| !matches!(c, '.' | '$' | ','))
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

fn op_start_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\b(add|subtract|multiply|divide|exp|greater)\s*\(").unwrap())
}

fn number_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\(?-?\$?-?(?:\d{1,3}(?:,\d{3})+(?:\.\d+)?|\d+(?:\.\d+)?|\.\d+)\s?%?\)?").unwrap())
}

/// The last well-formed program in `text`, if any.
pub fn find_last_program<T: Scalar>(text: &str) -> Option<Program<T>> {
    let starts: Vec<usize> = op_start_regex().find_iter(text).map(|m| m.start()).collect();
    starts.into_iter().rev().find_map(|s| {
        let mut p = Parser::new(&text[s..]);
        p.program(true).ok()
    })
}

fn last_number<T: Scalar>(text: &str) -> Option<NumberAnswer<T>> {
    number_regex()
        .find_iter(text)
        .filter_map(|m| {
            let mut s = m.as_str();
            // unbalanced parentheses belong to the prose, not the number
            if s.starts_with('(') && !s.ends_with(')') {
                s = &s[1..];
            } else if s.ends_with(')') && !s.starts_with('(') {
                s = &s[..s.len() - 1];
            }
            parse_number::<T>(s).map(|p| NumberAnswer {
                value: p.value,
                percent: p.percent,
                decimals: p.decimals,
            })
        })
        .last()
}

/// Pull the final answer out of a raw completion. `None` means unanswered.
pub fn extract_answer<T: Scalar>(completion: &str, qtype: QuestionType) -> Option<NormalizedAnswer<T>> {
    let tail = completion
        .rfind(ANSWER_TRIGGER)
        .map_or(completion, |i| &completion[i + ANSWER_TRIGGER.len()..]);
    match qtype {
        QuestionType::Arithmetic => {
            if let Some(p) = find_last_program::<T>(tail) {
                return eval_program(&p).ok();
            }
            if let Some(n) = last_number::<T>(tail) {
                return Some(NormalizedAnswer::Number(n));
            }
            match NormalizedAnswer::<T>::from_text(first_line(tail)) {
                b @ NormalizedAnswer::Boolean(_) => Some(b),
                _ => None,
            }
        }
        QuestionType::SpanSelection => {
            let line = first_line(tail).trim_start_matches(':').trim();
            let line = line.trim_end_matches('.').trim();
            if line.is_empty() {
                None
            } else {
                Some(NormalizedAnswer::from_text(line))
            }
        }
    }
}

fn first_line(s: &str) -> &str {
    s.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> Program<f64> {
        parse_program(s).unwrap()
    }

    fn num(a: Option<NormalizedAnswer<f64>>) -> f64 {
        match a {
            Some(NormalizedAnswer::Number(n)) => n.value,
            other => panic!("not a number: {other:?}"),
        }
    }

    #[test]
    fn parses_single_step() {
        let prog = p("subtract(5829, 5735)");
        assert_eq!(prog.steps.len(), 1);
        assert_eq!(prog.steps[0].op, Op::Subtract);
    }

    #[test]
    fn parses_step_reference() {
        let prog = p("subtract(100, 80), divide(#0, 80)");
        assert_eq!(prog.steps[1].args[0], Arg::StepRef(0));
    }

    #[test]
    fn rejects_forward_reference() {
        let e = parse_program::<f64>("subtract(#1, 5)").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::ForwardRef { step: 0, target: 1 });
        assert_eq!(e.pos, 9);
    }

    #[test]
    fn error_kinds() {
        let kind = |s: &str| parse_program::<f64>(s).unwrap_err().kind;
        assert_eq!(kind("modulo(1, 2)"), ParseErrorKind::UnknownOp("modulo".into()));
        assert_eq!(kind("add(1, 2, 3)"), ParseErrorKind::Arity { op: "add", found: 3 });
        assert_eq!(kind("add(1,234)"), ParseErrorKind::Arity { op: "add", found: 1 });
        assert_eq!(
            kind("add(1, x)"),
            ParseErrorKind::Unexpected {
                expected: "argument",
                found: "`x`".into()
            }
        );
        assert_eq!(kind("add(1, 2..5)"), ParseErrorKind::BadLiteral("2..5".into()));
        assert_eq!(kind("   "), ParseErrorKind::Empty);
        assert!(matches!(kind("add(1, 2) junk"), ParseErrorKind::Unexpected { .. }));
    }

    #[test]
    fn decorated_literals_and_constants() {
        let prog = p(" divide( $5,829.5 , (1,000) ), multiply(#0, const_100), add(#1, const_m1), add(14.1%, 0)");
        assert_eq!(prog.steps[0].args, [Arg::Const(5829.5), Arg::Const(-1000.0)]);
        assert_eq!(prog.steps[1].args[1], Arg::Const(100.0));
        assert_eq!(prog.steps[2].args[1], Arg::Const(-1.0));
        assert_eq!(prog.steps[3].args[0], Arg::Const(14.1));
    }

    #[test]
    fn evaluates() {
        assert_eq!(num(eval_program(&p("subtract(5829, 5735)")).ok()), 94.0);
        assert_eq!(num(eval_program(&p("subtract(100, 80), divide(#0, 80)")).ok()), 0.25);
        assert_eq!(num(eval_program(&p("exp(2, 10)")).ok()), 1024.0);
        assert_eq!(
            eval_program(&p("greater(3, 5)")).unwrap(),
            NormalizedAnswer::Boolean(false)
        );
        assert_eq!(eval_program(&p("greater(3, 5)")).unwrap().as_text(), "no");
    }

    #[test]
    fn evaluation_errors() {
        assert_eq!(eval_program(&p("divide(1, 0)")), Err(EvalError::DivisionByZero(0)));
        assert_eq!(
            eval_program(&p("greater(1, 0), add(#0, 1)")),
            Err(EvalError::BooleanOperand(1))
        );
    }

    #[test]
    fn display_round_trip() {
        let prog = p("subtract(5,829, -5735.25), divide(#0, 0.001)");
        assert_eq!(prog.to_string(), "subtract(5829, -5735.25), divide(#0, 0.001)");
        assert_eq!(p(&prog.to_string()), prog);
    }

    #[test]
    fn extracts_program_after_trigger() {
        let c = "We need to find revenue. Therefore, the answer to the question is subtract(5829, 5735)";
        assert_eq!(num(extract_answer(c, QuestionType::Arithmetic)), 94.0);
    }

    #[test]
    fn extracts_last_program_with_refs() {
        let c = "First add(1, 2). Answer: subtract(100, 80), divide(#0, 80).";
        assert_eq!(num(extract_answer(c, QuestionType::Arithmetic)), 0.25);
    }

    #[test]
    fn falls_back_to_last_number() {
        let c = "… the answer to the question is 14.1%";
        match extract_answer::<f64>(c, QuestionType::Arithmetic) {
            Some(NormalizedAnswer::Number(n)) => {
                assert_eq!(n.value, 14.1);
                assert!(n.percent);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(
            num(extract_answer("it was (1,234) in total", QuestionType::Arithmetic)),
            -1234.0
        );
        assert_eq!(
            num(extract_answer("about 12 (see note 3", QuestionType::Arithmetic)),
            3.0
        );
    }

    #[test]
    fn division_by_zero_is_unanswered() {
        assert_eq!(extract_answer::<f64>("divide(5, 0)", QuestionType::Arithmetic), None);
    }

    #[test]
    fn empty_completion_unanswered() {
        assert_eq!(extract_answer::<f64>("", QuestionType::Arithmetic), None);
        assert_eq!(extract_answer::<f64>("  ", QuestionType::SpanSelection), None);
    }

    #[test]
    fn span_answer_first_line() {
        let c = "We need to find the year.\nTherefore, the answer to the question is 2019.\nExtra.";
        assert_eq!(
            extract_answer::<f64>(c, QuestionType::SpanSelection),
            Some(NormalizedAnswer::number(2019.0))
        );
        let c = "Therefore, the answer to the question is Home Equity.";
        assert_eq!(
            extract_answer::<f64>(c, QuestionType::SpanSelection),
            Some(NormalizedAnswer::Text("home equity".into()))
        );
    }

    #[test]
    fn text_normalization() {
        assert_eq!(normalize_text("  The  U.S. $Net, Income "), "the us net income");
        assert_eq!(
            NormalizedAnswer::<f64>::from_text("Yes."),
            NormalizedAnswer::Boolean(true)
        );
    }
}
