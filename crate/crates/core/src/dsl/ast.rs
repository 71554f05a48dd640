//! Untyped syntax tree produced by the parser.

use std::fmt;

use num_rational::Rational64;

/// 1-based source position of the first character of a construct.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

impl Span {
    pub fn new(line: u32, col: u32) -> Self {
        Span { line, col }
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    /// Quoted constant.
    Const(String),
    /// Uppercase-initial variable.
    Var(String),
    /// `+X` summation variable; only legal inside arithmetic constraints.
    SumVar(String),
}

impl Term {
    pub fn var_name(&self) -> Option<&str> {
        match self {
            Term::Var(v) | Term::SumVar(v) => Some(v),
            Term::Const(_) => None,
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Const(c) => write!(f, "\"{}\"", c),
            Term::Var(v) => f.write_str(v),
            Term::SumVar(v) => write!(f, "+{}", v),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Atom {
    pub predicate: String,
    pub args: Vec<Term>,
    /// Inline `?` annotation.
    pub open_mark: bool,
    pub span: Span,
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.predicate)?;
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{}", a)?;
        }
        f.write_str(")")?;
        if self.open_mark {
            f.write_str("?")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Literal {
    Atom { atom: Atom, negated: bool },
    /// Built-in `(X = Y)` / `(X != Y)` test between terms.
    Guard { lhs: Term, rhs: Term, equal: bool, span: Span },
}

impl Literal {
    pub fn span(&self) -> Span {
        match self {
            Literal::Atom { atom, .. } => atom.span,
            Literal::Guard { span, .. } => *span,
        }
    }

    pub fn negate(&self) -> Literal {
        match self {
            Literal::Atom { atom, negated } => Literal::Atom { atom: atom.clone(), negated: !negated },
            Literal::Guard { lhs, rhs, equal, span } => Literal::Guard {
                lhs: lhs.clone(),
                rhs: rhs.clone(),
                equal: !equal,
                span: *span,
            },
        }
    }

    pub fn atom(&self) -> Option<&Atom> {
        match self {
            Literal::Atom { atom, .. } => Some(atom),
            Literal::Guard { .. } => None,
        }
    }

    pub fn is_negated(&self) -> bool {
        matches!(self, Literal::Atom { negated: true, .. })
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Atom { atom, negated } => {
                if *negated {
                    f.write_str("~")?;
                }
                write!(f, "{}", atom)
            }
            Literal::Guard { lhs, rhs, equal, .. } => {
                write!(f, "({} {} {})", lhs, if *equal { "=" } else { "!=" }, rhs)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RuleKind {
    Weighted,
    Hard,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleDecl {
    pub kind: RuleKind,
    pub body: Vec<Literal>,
    pub head: Literal,
    pub span: Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Comparator {
    Le,
    Ge,
    Eq,
}

impl fmt::Display for Comparator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Comparator::Le => "<=",
            Comparator::Ge => ">=",
            Comparator::Eq => "=",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArithDecl {
    pub terms: Vec<(Rational64, Atom)>,
    pub comparator: Comparator,
    pub rhs: Rational64,
    pub span: Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EntityKindDecl {
    /// Bare declaration: symbolic, vocabulary taken from the data.
    Symbolic,
    /// `vocab`: symbolic with an explicit `.vocab` file.
    Vocab,
    /// `features=<n>`: attributed with an n-dimensional dense vector.
    Features(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityDecl {
    pub name: String,
    pub kind: EntityKindDecl,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredicateDecl {
    pub name: String,
    pub arg_types: Vec<String>,
    pub open: bool,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Item {
    Entity(EntityDecl),
    Predicate(PredicateDecl),
    Rule(RuleDecl),
    Arith(ArithDecl),
}

/// Parsed but unchecked program, items in source order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AbstractProgram {
    pub items: Vec<Item>,
}

impl AbstractProgram {
    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn declaration_count(&self) -> usize {
        self.items
            .iter()
            .filter(|i| matches!(i, Item::Entity(_) | Item::Predicate(_)))
            .count()
    }

    /// Copy with every span zeroed, for structural comparison.
    pub fn without_spans(&self) -> AbstractProgram {
        fn atom(a: &Atom) -> Atom {
            Atom { span: Span::default(), ..a.clone() }
        }
        fn lit(l: &Literal) -> Literal {
            match l {
                Literal::Atom { atom: a, negated } => Literal::Atom { atom: atom(a), negated: *negated },
                Literal::Guard { lhs, rhs, equal, .. } => Literal::Guard {
                    lhs: lhs.clone(),
                    rhs: rhs.clone(),
                    equal: *equal,
                    span: Span::default(),
                },
            }
        }
        let items = self
            .items
            .iter()
            .map(|item| match item {
                Item::Entity(e) => Item::Entity(EntityDecl { span: Span::default(), ..e.clone() }),
                Item::Predicate(p) => Item::Predicate(PredicateDecl { span: Span::default(), ..p.clone() }),
                Item::Rule(r) => Item::Rule(RuleDecl {
                    kind: r.kind,
                    body: r.body.iter().map(lit).collect(),
                    head: lit(&r.head),
                    span: Span::default(),
                }),
                Item::Arith(a) => Item::Arith(ArithDecl {
                    terms: a.terms.iter().map(|(c, t)| (*c, atom(t))).collect(),
                    comparator: a.comparator,
                    rhs: a.rhs,
                    span: Span::default(),
                }),
            })
            .collect();
        AbstractProgram { items }
    }
}
