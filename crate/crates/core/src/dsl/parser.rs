use num_rational::Rational64;

use super::ast::*;
use super::lexer::{tokenize, Tok, Token};
use super::SyntaxError;

/// Parses program text into an [`AbstractProgram`]. No semantic checks.
pub fn parse_program(source: &str) -> Result<AbstractProgram, SyntaxError> {
    let tokens = tokenize(source)?;
    let mut p = Parser { tokens, pos: 0 };
    let mut items = Vec::new();
    while !p.at(&Tok::Eof) {
        items.push(p.item()?);
    }
    Ok(AbstractProgram { items })
}

/// Parses a single rule body/head pair such as `A(X) & B(X) => C(X)`.
pub fn parse_rule(source: &str, kind: RuleKind) -> Result<RuleDecl, SyntaxError> {
    let tokens = tokenize(source)?;
    let mut p = Parser { tokens, pos: 0 };
    let span = p.peek().span;
    let rule = p.rule_tail(kind, span)?;
    p.expect(&Tok::Eof, "end of input")?;
    Ok(rule)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn at(&self, t: &Tok) -> bool {
        &self.peek().tok == t
    }

    fn advance(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, expected: &[&str]) -> SyntaxError {
        let t = self.peek();
        SyntaxError::new(t.span, &t.tok.to_string(), expected)
    }

    fn expect(&mut self, t: &Tok, what: &str) -> Result<Token, SyntaxError> {
        if self.at(t) {
            Ok(self.advance())
        } else {
            Err(self.error(&[what]))
        }
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.at(t) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn ident(&mut self, what: &str) -> Result<(String, Span), SyntaxError> {
        match &self.peek().tok {
            Tok::Ident(s) => {
                let s = s.clone();
                let span = self.advance().span;
                Ok((s, span))
            }
            _ => Err(self.error(&[what])),
        }
    }

    fn item(&mut self) -> Result<Item, SyntaxError> {
        let span = self.peek().span;
        let kw = match &self.peek().tok {
            Tok::Ident(s) => s.clone(),
            _ => return Err(self.error(&["`entity`", "`predicate`", "`rule`", "`hardconstraint`", "`arith`"])),
        };
        match kw.as_str() {
            "entity" => {
                self.advance();
                self.entity(span).map(Item::Entity)
            }
            "predicate" => {
                self.advance();
                self.predicate(span).map(Item::Predicate)
            }
            "rule" | "hardconstraint" => {
                self.advance();
                self.expect(&Tok::Colon, "`:`")?;
                let kind = if kw == "rule" { RuleKind::Weighted } else { RuleKind::Hard };
                self.rule_tail(kind, span).map(Item::Rule)
            }
            "arith" => {
                self.advance();
                self.expect(&Tok::Colon, "`:`")?;
                self.arith(span).map(Item::Arith)
            }
            _ => Err(self.error(&["`entity`", "`predicate`", "`rule`", "`hardconstraint`", "`arith`"])),
        }
    }

    fn entity(&mut self, span: Span) -> Result<EntityDecl, SyntaxError> {
        let (name, _) = self.ident("entity name")?;
        let kind = match &self.peek().tok {
            Tok::Ident(s) if s == "vocab" => {
                self.advance();
                EntityKindDecl::Vocab
            }
            Tok::Ident(s) if s == "features" => {
                self.advance();
                self.expect(&Tok::Eq, "`=`")?;
                match &self.peek().tok {
                    Tok::Number(n) if !n.contains('.') => {
                        let dim = n.parse::<usize>().map_err(|_| self.error(&["feature count"]))?;
                        self.advance();
                        EntityKindDecl::Features(dim)
                    }
                    _ => return Err(self.error(&["feature count"])),
                }
            }
            _ => EntityKindDecl::Symbolic,
        };
        Ok(EntityDecl { name, kind, span })
    }

    fn predicate(&mut self, span: Span) -> Result<PredicateDecl, SyntaxError> {
        let (name, _) = self.ident("predicate name")?;
        self.expect(&Tok::LParen, "`(`")?;
        let mut arg_types = Vec::new();
        if !self.at(&Tok::RParen) {
            loop {
                arg_types.push(self.ident("entity type")?.0);
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
        }
        self.expect(&Tok::RParen, "`)`")?;
        let open = self.eat(&Tok::Question);
        Ok(PredicateDecl { name, arg_types, open, span })
    }

    fn rule_tail(&mut self, kind: RuleKind, span: Span) -> Result<RuleDecl, SyntaxError> {
        let mut body = Vec::new();
        if !self.at(&Tok::Arrow) {
            loop {
                body.push(self.literal()?);
                if !self.eat(&Tok::Amp) {
                    break;
                }
            }
        }
        if !self.at(&Tok::Arrow) {
            return Err(self.error(&["`&`", "`=>`"]));
        }
        self.advance();
        let head = self.literal()?;
        Ok(RuleDecl { kind, body, head, span })
    }

    fn literal(&mut self) -> Result<Literal, SyntaxError> {
        if self.at(&Tok::LParen) {
            let span = self.advance().span;
            let lhs = self.term(false)?;
            let equal = match self.peek().tok {
                Tok::Eq => true,
                Tok::Ne => false,
                _ => return Err(self.error(&["`=`", "`!=`"])),
            };
            self.advance();
            let rhs = self.term(false)?;
            self.expect(&Tok::RParen, "`)`")?;
            return Ok(Literal::Guard { lhs, rhs, equal, span });
        }
        let negated = self.eat(&Tok::Tilde);
        let atom = self.atom(false)?;
        Ok(Literal::Atom { atom, negated })
    }

    fn atom(&mut self, allow_sum: bool) -> Result<Atom, SyntaxError> {
        let span = self.peek().span;
        let predicate = match &self.peek().tok {
            Tok::Ident(s) => s.clone(),
            _ => return Err(self.error(&["atom", "`~`", "`(`"])),
        };
        self.advance();
        self.expect(&Tok::LParen, "`(`")?;
        let mut args = Vec::new();
        if !self.at(&Tok::RParen) {
            loop {
                args.push(self.term(allow_sum)?);
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
        }
        self.expect(&Tok::RParen, "`)`")?;
        let open_mark = self.eat(&Tok::Question);
        Ok(Atom { predicate, args, open_mark, span })
    }

    fn term(&mut self, allow_sum: bool) -> Result<Term, SyntaxError> {
        match self.peek().tok.clone() {
            Tok::Str(s) => {
                self.advance();
                Ok(Term::Const(s))
            }
            Tok::Ident(s) if s.starts_with(|c: char| c.is_uppercase()) => {
                self.advance();
                Ok(Term::Var(s))
            }
            Tok::Plus if allow_sum => {
                self.advance();
                match self.peek().tok.clone() {
                    Tok::Ident(s) if s.starts_with(|c: char| c.is_uppercase()) => {
                        self.advance();
                        Ok(Term::SumVar(s))
                    }
                    _ => Err(self.error(&["variable"])),
                }
            }
            _ => {
                if allow_sum {
                    Err(self.error(&["constant", "variable", "`+`"]))
                } else {
                    Err(self.error(&["constant", "variable"]))
                }
            }
        }
    }

    fn arith(&mut self, span: Span) -> Result<ArithDecl, SyntaxError> {
        let mut terms = Vec::new();
        let mut sign = Rational64::from_integer(1);
        if self.eat(&Tok::Minus) {
            sign = -sign;
        }
        loop {
            let coef = if matches!(self.peek().tok, Tok::Number(_)) {
                let c = self.rational()?;
                self.eat(&Tok::Star);
                c
            } else {
                Rational64::from_integer(1)
            };
            let atom = self.atom(true)?;
            terms.push((sign * coef, atom));
            sign = match self.peek().tok {
                Tok::Plus => Rational64::from_integer(1),
                Tok::Minus => Rational64::from_integer(-1),
                _ => break,
            };
            self.advance();
        }
        let comparator = match self.peek().tok {
            Tok::Le => Comparator::Le,
            Tok::Ge => Comparator::Ge,
            Tok::Eq => Comparator::Eq,
            _ => return Err(self.error(&["`+`", "`-`", "`<=`", "`>=`", "`=`"])),
        };
        self.advance();
        let neg = self.eat(&Tok::Minus);
        let mut rhs = self.rational()?;
        if neg {
            rhs = -rhs;
        }
        Ok(ArithDecl { terms, comparator, rhs, span })
    }

    /// `<int>`, `<decimal>` or `<int>/<int>`.
    fn rational(&mut self) -> Result<Rational64, SyntaxError> {
        let text = match &self.peek().tok {
            Tok::Number(n) => n.clone(),
            _ => return Err(self.error(&["number"])),
        };
        let span = self.peek().span;
        let value = parse_decimal(&text).ok_or_else(|| SyntaxError::new(span, &format!("number `{}`", text), &["number"]))?;
        self.advance();
        if self.at(&Tok::Slash) {
            self.advance();
            let den = match &self.peek().tok {
                Tok::Number(n) => parse_decimal(n).filter(|d| *d != Rational64::from_integer(0)),
                _ => None,
            };
            let den = den.ok_or_else(|| self.error(&["non-zero denominator"]))?;
            self.advance();
            return Ok(value / den);
        }
        Ok(value)
    }
}

pub(crate) fn parse_decimal(text: &str) -> Option<Rational64> {
    let (int, frac) = match text.split_once('.') {
        Some((i, f)) => (i, f),
        None => (text, ""),
    };
    if int.is_empty() || frac.contains('.') || frac.len() > 15 {
        return None;
    }
    let digits = format!("{}{}", int, frac);
    let num: i64 = digits.parse().ok()?;
    let den = 10i64.checked_pow(frac.len() as u32)?;
    Some(Rational64::new(num, den))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rule(src: &str) -> RuleDecl {
        let p = parse_program(src).unwrap();
        match &p.items[0] {
            Item::Rule(r) => r.clone(),
            other => panic!("not a rule: {:?}", other),
        }
    }

    #[test]
    fn vote_rule_has_two_literal_body() {
        let r = rule("rule: Agree(X, C) & VoteFor(Y, X) => Agree(Y, C)");
        assert_eq!(r.kind, RuleKind::Weighted);
        assert_eq!(r.body.len(), 2);
        let head = r.head.atom().unwrap();
        assert_eq!(head.predicate, "Agree");
        assert_eq!(head.args, vec![Term::Var("Y".into()), Term::Var("C".into())]);
    }

    #[test]
    fn empty_file_has_no_declarations() {
        let p = parse_program("").unwrap();
        assert!(p.is_empty());
        assert_eq!(p.declaration_count(), 0);
        assert!(parse_program("  // only a comment\n\n").unwrap().is_empty());
    }

    #[test]
    fn summation_atom() {
        let p = parse_program("arith: Ideology(X, +I) = 1").unwrap();
        let Item::Arith(a) = &p.items[0] else { panic!() };
        assert_eq!(a.terms.len(), 1);
        assert_eq!(a.terms[0].0, Rational64::from_integer(1));
        assert_eq!(a.terms[0].1.args[1], Term::SumVar("I".into()));
        assert_eq!(a.comparator, Comparator::Eq);
        assert_eq!(a.rhs, Rational64::from_integer(1));
    }

    #[test]
    fn arith_coefficients_and_rationals() {
        let p = parse_program("arith: 2 * A(X) - 1/2 B(X, \"k\")? + 0.25 A(\"z\") >= -3/4").unwrap();
        let Item::Arith(a) = &p.items[0] else { panic!() };
        let coefs: Vec<_> = a.terms.iter().map(|t| t.0).collect();
        assert_eq!(coefs, vec![Rational64::new(2, 1), Rational64::new(-1, 2), Rational64::new(1, 4)]);
        assert!(a.terms[1].1.open_mark);
        assert_eq!(a.rhs, Rational64::new(-3, 4));
        assert_eq!(a.comparator, Comparator::Ge);
    }

    #[test]
    fn declarations() {
        let p = parse_program(
            "entity Post features=2\nentity Ideology vocab\nentity Thread\npredicate Agree(Post, Post)?\npredicate InThread(Thread, Post)",
        )
        .unwrap();
        assert_eq!(p.declaration_count(), 5);
        let Item::Entity(e) = &p.items[0] else { panic!() };
        assert_eq!(e.kind, EntityKindDecl::Features(2));
        let Item::Predicate(pd) = &p.items[3] else { panic!() };
        assert!(pd.open);
        assert_eq!(pd.arg_types, vec!["Post", "Post"]);
    }

    #[test]
    fn guards_and_negation() {
        let r = rule("hardconstraint: InPar(C1, P) & InPar(C2, P) & (C1 = C2) => ~Path(C1, C2)?");
        assert_eq!(r.kind, RuleKind::Hard);
        assert!(matches!(r.body[2], Literal::Guard { equal: true, .. }));
        assert!(r.head.is_negated());
    }

    #[test]
    fn weight_prefix_is_a_syntax_error() {
        let err = parse_program("rule: 2.5 A(X) => B(X)").unwrap_err();
        assert_eq!((err.line, err.col), (1, 7));
        assert!(err.expected.iter().any(|e| e == "atom"));
    }

    #[test]
    fn error_positions() {
        let err = parse_program("entity A\npredicate P(A\n").unwrap_err();
        assert_eq!(err.line, 3);
        let err = parse_program("rule: A(X) B(X)").unwrap_err();
        assert_eq!((err.line, err.col), (1, 12));
        assert!(err.expected.contains(&"`=>`".to_string()));
        let err = parse_program("rule: A(x) => B(X)").unwrap_err();
        assert_eq!(err.col, 9);
    }

    #[test]
    fn sum_variable_outside_arith_rejected() {
        assert!(parse_program("rule: A(+X) => B(X)").is_err());
    }

    #[test]
    fn decimal_parsing() {
        assert_eq!(parse_decimal("0.5"), Some(Rational64::new(1, 2)));
        assert_eq!(parse_decimal("12"), Some(Rational64::from_integer(12)));
        assert_eq!(parse_decimal("1.2.3"), None);
    }
}
