use super::{Expr, VarRef};
use crate::grammar::ParseError;
use crate::variable::VariableId;

/// Parses an infix expression.
///
/// Accepts the canonical output of [`Expr`]'s `Display` as well as the raw
/// phenotype text produced by grammar decoding: variables with or without a
/// `(t_n)` / `(t_n-k)` suffix, `*` or `·` for products, `-` or `−` for
/// minus, and `pow(x, ±k)` with an integer exponent.
pub fn parse_expr(text: &str) -> Result<Expr, ParseError> {
    let tokens = lex(text)?;
    let mut p = Parser { tokens, pos: 0 };
    let e = p.sum()?;
    match p.peek() {
        None => Ok(e),
        Some(t) => Err(p.error(format!("unexpected `{}`", t.kind))),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    Num(f64, bool),
    Ident(String),
    Plus,
    Minus,
    Star,
    LParen,
    RParen,
    Comma,
}

impl std::fmt::Display for Kind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Kind::Num(v, _) => write!(f, "{v}"),
            Kind::Ident(s) => f.write_str(s),
            Kind::Plus => f.write_str("+"),
            Kind::Minus => f.write_str("-"),
            Kind::Star => f.write_str("*"),
            Kind::LParen => f.write_str("("),
            Kind::RParen => f.write_str(")"),
            Kind::Comma => f.write_str(","),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    kind: Kind,
    col: usize,
}

fn lex(text: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        let kind = match c {
            c if c.is_whitespace() => {
                i += 1;
                continue;
            }
            '+' => Kind::Plus,
            '-' | '−' => Kind::Minus,
            '*' | '·' => Kind::Star,
            '(' => Kind::LParen,
            ')' => Kind::RParen,
            ',' => Kind::Comma,
            c if c.is_ascii_digit() || c == '.' => {
                let start = i;
                let mut integral = true;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    integral &= chars[i] != '.';
                    i += 1;
                }
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        while j < chars.len() && chars[j].is_ascii_digit() {
                            j += 1;
                        }
                        integral = false;
                        i = j;
                    }
                }
                let s: String = chars[start..i].iter().collect();
                let v: f64 = s
                    .parse()
                    .map_err(|_| ParseError::new(1, format!("column {col}: malformed number `{s}`")))?;
                out.push(Token {
                    kind: Kind::Num(v, integral),
                    col,
                });
                continue;
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                out.push(Token {
                    kind: Kind::Ident(chars[start..i].iter().collect()),
                    col,
                });
                continue;
            }
            other => {
                return Err(ParseError::new(
                    1,
                    format!("column {col}: unexpected character `{other}`"),
                ))
            }
        };
        out.push(Token { kind, col });
        i += 1;
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn peek_kind(&self, offset: usize) -> Option<&Kind> {
        self.tokens.get(self.pos + offset).map(|t| &t.kind)
    }

    fn error(&self, message: String) -> ParseError {
        let col = self
            .peek()
            .map(|t| t.col)
            .or_else(|| self.tokens.last().map(|t| t.col + 1))
            .unwrap_or(1);
        ParseError::new(1, format!("column {col}: {message}"))
    }

    fn expect(&mut self, kind: Kind) -> Result<(), ParseError> {
        match self.peek() {
            Some(t) if t.kind == kind => {
                self.pos += 1;
                Ok(())
            }
            Some(t) => Err(self.error(format!("expected `{kind}`, found `{}`", t.kind))),
            None => Err(self.error(format!("expected `{kind}`, found end of input"))),
        }
    }

    fn sum(&mut self) -> Result<Expr, ParseError> {
        let mut acc = self.product()?;
        loop {
            match self.peek_kind(0) {
                Some(Kind::Plus) => {
                    self.pos += 1;
                    acc = Expr::add(acc, self.product()?);
                }
                Some(Kind::Minus) => {
                    self.pos += 1;
                    acc = Expr::sub(acc, self.product()?);
                }
                _ => return Ok(acc),
            }
        }
    }

    /// A leading minus negates the whole product: `-a*b` is `-(a*b)`.
    fn product(&mut self) -> Result<Expr, ParseError> {
        if let Some(Kind::Minus) = self.peek_kind(0) {
            self.pos += 1;
            return Ok(Expr::neg(self.product()?));
        }
        let mut acc = self.unary()?;
        while let Some(Kind::Star) = self.peek_kind(0) {
            self.pos += 1;
            acc = Expr::mul(acc, self.unary()?);
        }
        Ok(acc)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        match self.peek_kind(0) {
            Some(Kind::Minus) => {
                self.pos += 1;
                Ok(Expr::neg(self.unary()?))
            }
            _ => self.atom(),
        }
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let Some(tok) = self.peek().cloned() else {
            return Err(self.error("unexpected end of input".into()));
        };
        match tok.kind {
            Kind::Num(v, _) => {
                self.pos += 1;
                Ok(Expr::Const(v))
            }
            Kind::LParen => {
                self.pos += 1;
                let e = self.sum()?;
                self.expect(Kind::RParen)?;
                Ok(e)
            }
            Kind::Ident(ref name) if name == "pow" => {
                self.pos += 1;
                self.expect(Kind::LParen)?;
                let base = self.sum()?;
                self.expect(Kind::Comma)?;
                let exponent = self.signed_int()?;
                self.expect(Kind::RParen)?;
                Ok(Expr::pow(base, exponent))
            }
            Kind::Ident(ref name) => {
                let var =
                    VariableId::from_symbol(name).ok_or_else(|| self.error(format!("unknown variable `{name}`")))?;
                self.pos += 1;
                let lag = self.time_suffix()?;
                Ok(Expr::Var(VarRef { var, lag }))
            }
            other => Err(self.error(format!("unexpected `{other}`"))),
        }
    }

    /// Optional `(t_n)` or `(t_n-k)` after a variable name.
    fn time_suffix(&mut self) -> Result<u8, ParseError> {
        let is_suffix = matches!(self.peek_kind(0), Some(Kind::LParen))
            && matches!(self.peek_kind(1), Some(Kind::Ident(s)) if s == "t_n");
        if !is_suffix {
            return Ok(0);
        }
        self.pos += 2;
        let mut lag = 0u8;
        if let Some(Kind::Minus) = self.peek_kind(0) {
            self.pos += 1;
            match self.peek_kind(0) {
                Some(Kind::Num(v, true)) if *v >= 1.0 && *v <= u8::MAX as f64 => {
                    lag = *v as u8;
                    self.pos += 1;
                }
                _ => return Err(self.error("expected a positive integer lag".into())),
            }
        }
        self.expect(Kind::RParen)?;
        Ok(lag)
    }

    fn signed_int(&mut self) -> Result<i32, ParseError> {
        let sign = match self.peek_kind(0) {
            Some(Kind::Minus) => {
                self.pos += 1;
                -1
            }
            Some(Kind::Plus) => {
                self.pos += 1;
                1
            }
            _ => 1,
        };
        match self.peek_kind(0) {
            Some(Kind::Num(v, true)) if *v <= i32::MAX as f64 => {
                let v = *v as i32;
                self.pos += 1;
                Ok(sign * v)
            }
            _ => Err(self.error("expected an integer exponent".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::variable::VariableId::*;

    #[test]
    fn precedence_and_associativity() {
        let e = parse_expr("1 - 2 - 3 * 4 * 5").unwrap();
        assert_eq!(
            e,
            Expr::sub(
                Expr::sub(Expr::Const(1.0), Expr::Const(2.0)),
                Expr::mul(Expr::mul(Expr::Const(3.0), Expr::Const(4.0)), Expr::Const(5.0)),
            )
        );
    }

    #[test]
    fn phenotype_text_with_spaces() {
        let e = parse_expr("G + ( 3.6 - G*B_I * ( -HR ) )").unwrap();
        let expected = Expr::add(
            Expr::var(G),
            Expr::sub(
                Expr::Const(3.6),
                Expr::mul(Expr::product(G, BasalInsulin), Expr::neg(Expr::var(HeartRate))),
            ),
        );
        assert_eq!(e, expected);
        let p = parse_expr("pow( I_B*HR , - 3 )").unwrap();
        assert_eq!(p, Expr::pow(Expr::product(InsulinBolus, HeartRate), -3));
    }

    #[test]
    fn unicode_operators_and_suffixes() {
        let a = parse_expr("G(t_n) − F_ch(t_n)·HR(t_n) + 3.6").unwrap();
        let b = parse_expr("G - F_ch*HR + 3.6").unwrap();
        assert_eq!(a, b);
        let lag = parse_expr("C(t_n - 3)").unwrap();
        assert_eq!(lag, Expr::lagged(Calories, 3));
    }

    #[test]
    fn errors_carry_columns() {
        let err = parse_expr("G + X").unwrap_err();
        assert!(err.to_string().contains("unknown variable `X`"), "{err}");
        assert!(err.to_string().contains("column 5"), "{err}");
        assert!(parse_expr("G +").is_err());
        assert!(parse_expr("(G").is_err());
        assert!(parse_expr("pow(G, 1.5)").is_err());
        assert!(parse_expr("G $").is_err());
        assert!(parse_expr("G G").is_err());
    }

    #[test]
    fn scientific_numbers() {
        assert_eq!(parse_expr("1e-3").unwrap(), Expr::Const(1e-3));
        assert_eq!(parse_expr("2.5E2").unwrap(), Expr::Const(250.0));
    }
}
