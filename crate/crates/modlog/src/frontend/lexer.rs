//! Tokenizer for module source text.
//!
//! Qualified names are assembled here: an identifier immediately followed by
//! `.` and another identifier character (no intervening whitespace) extends
//! the same token, so `in.Reach` is one token while the `.` terminating a
//! statement stays a separate token. Keywords are recognized only as whole
//! unqualified words; `conforms` may still appear as a trailing segment of a
//! qualified name, as in `in.conforms`.

use crate::diag::{codes, Diag, Span};
use num_bigint::BigInt;
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokenKind {
    /// Possibly-qualified identifier: one or more dot-joined segments.
    Ident(Vec<String>),
    Int(BigInt),
    Str(String),
    // keywords
    KwDomain,
    KwModel,
    KwTransform,
    KwSystem,
    KwOf,
    KwIncludes,
    KwExtends,
    KwReturns,
    KwNew,
    KwFun,
    KwNo,
    KwIs,
    KwCount,
    KwConforms,
    KwRequires,
    KwEnsures,
    KwAny,
    // punctuation
    ColonColonEq, // ::=
    ColonColon,   // ::
    ColonDash,    // :-
    Colon,
    Dot,
    Comma,
    Semi,
    LParen,
    RParen,
    LBrace,
    RBrace,
    Plus,
    Minus,
    Star,
    Arrow, // ->
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Pipe,
    Underscore,
    Eof,
}

impl TokenKind {
    pub fn describe(&self) -> String {
        match self {
            TokenKind::Ident(segs) => format!("identifier `{}`", segs.join(".")),
            TokenKind::Int(n) => format!("integer `{}`", n),
            TokenKind::Str(_) => "string literal".to_string(),
            TokenKind::KwDomain => "`domain`".into(),
            TokenKind::KwModel => "`model`".into(),
            TokenKind::KwTransform => "`transform`".into(),
            TokenKind::KwSystem => "`system`".into(),
            TokenKind::KwOf => "`of`".into(),
            TokenKind::KwIncludes => "`includes`".into(),
            TokenKind::KwExtends => "`extends`".into(),
            TokenKind::KwReturns => "`returns`".into(),
            TokenKind::KwNew => "`new`".into(),
            TokenKind::KwFun => "`fun`".into(),
            TokenKind::KwNo => "`no`".into(),
            TokenKind::KwIs => "`is`".into(),
            TokenKind::KwCount => "`count`".into(),
            TokenKind::KwConforms => "`conforms`".into(),
            TokenKind::KwRequires => "`requires`".into(),
            TokenKind::KwEnsures => "`ensures`".into(),
            TokenKind::KwAny => "`any`".into(),
            TokenKind::ColonColonEq => "`::=`".into(),
            TokenKind::ColonColon => "`::`".into(),
            TokenKind::ColonDash => "`:-`".into(),
            TokenKind::Colon => "`:`".into(),
            TokenKind::Dot => "`.`".into(),
            TokenKind::Comma => "`,`".into(),
            TokenKind::Semi => "`;`".into(),
            TokenKind::LParen => "`(`".into(),
            TokenKind::RParen => "`)`".into(),
            TokenKind::LBrace => "`{`".into(),
            TokenKind::RBrace => "`}`".into(),
            TokenKind::Plus => "`+`".into(),
            TokenKind::Minus => "`-`".into(),
            TokenKind::Star => "`*`".into(),
            TokenKind::Arrow => "`->`".into(),
            TokenKind::Eq => "`=`".into(),
            TokenKind::Ne => "`!=`".into(),
            TokenKind::Lt => "`<`".into(),
            TokenKind::Le => "`<=`".into(),
            TokenKind::Gt => "`>`".into(),
            TokenKind::Ge => "`>=`".into(),
            TokenKind::Pipe => "`|`".into(),
            TokenKind::Underscore => "`_`".into(),
            TokenKind::Eof => "end of file".into(),
        }
    }
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.describe())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub span: Span,
}

fn keyword(word: &str) -> Option<TokenKind> {
    Some(match word {
        "domain" => TokenKind::KwDomain,
        "model" => TokenKind::KwModel,
        "transform" => TokenKind::KwTransform,
        "system" => TokenKind::KwSystem,
        "of" => TokenKind::KwOf,
        "includes" => TokenKind::KwIncludes,
        "extends" => TokenKind::KwExtends,
        "returns" => TokenKind::KwReturns,
        "new" => TokenKind::KwNew,
        "fun" => TokenKind::KwFun,
        "no" => TokenKind::KwNo,
        "is" => TokenKind::KwIs,
        "count" => TokenKind::KwCount,
        "conforms" => TokenKind::KwConforms,
        "requires" => TokenKind::KwRequires,
        "ensures" => TokenKind::KwEnsures,
        "any" => TokenKind::KwAny,
        _ => return None,
    })
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_continue(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

struct Cursor<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: u32,
    col: u32,
}

impl<'a> Cursor<'a> {
    fn new(text: &'a str) -> Self {
        Cursor { chars: text.chars().peekable(), line: 1, col: 1 }
    }

    fn peek(&mut self) -> Option<char> {
        self.chars.peek().copied()
    }

    fn peek2(&mut self) -> Option<char> {
        let mut clone = self.chars.clone();
        clone.next();
        clone.next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }
}

/// Tokenizes source text. `//` line comments (including `////` banners) are
/// discarded. Errors carry the span of the offending character.
pub fn tokenize(path: &str, text: &str) -> Result<Vec<Token>, Diag> {
    let mut cur = Cursor::new(text);
    let mut tokens: Vec<Token> = Vec::new();

    loop {
        // Skip whitespace and comments.
        loop {
            match cur.peek() {
                Some(c) if c.is_whitespace() => {
                    cur.bump();
                }
                Some('/') if cur.peek2() == Some('/') => {
                    while let Some(c) = cur.peek() {
                        if c == '\n' {
                            break;
                        }
                        cur.bump();
                    }
                }
                _ => break,
            }
        }

        let (line, col) = (cur.line, cur.col);
        let span1 = Span::new(line, col, 1);
        let c = match cur.peek() {
            None => {
                tokens.push(Token { kind: TokenKind::Eof, span: span1 });
                return Ok(tokens);
            }
            Some(c) => c,
        };

        if is_ident_start(c) {
            let word = lex_word(&mut cur);
            if word == "_" {
                tokens.push(Token { kind: TokenKind::Underscore, span: span1 });
                continue;
            }
            if let Some(kw) = keyword(&word) {
                let len = word.chars().count() as u32;
                tokens.push(Token { kind: kw, span: Span::new(line, col, len) });
                continue;
            }
            let mut segments = vec![word];
            // Dot-chain further segments with strict adjacency.
            while cur.peek() == Some('.') && cur.peek2().is_some_and(is_ident_start) {
                cur.bump(); // '.'
                segments.push(lex_word(&mut cur));
            }
            let len: u32 = segments.iter().map(|s| s.chars().count() as u32 + 1).sum::<u32>() - 1;
            tokens.push(Token { kind: TokenKind::Ident(segments), span: Span::new(line, col, len) });
            continue;
        }

        if c.is_ascii_digit() {
            let (n, len) = lex_int(&mut cur);
            tokens.push(Token { kind: TokenKind::Int(n), span: Span::new(line, col, len) });
            continue;
        }

        match c {
            '"' => {
                cur.bump();
                let mut out = String::new();
                let mut len: u32 = 2;
                loop {
                    match cur.bump() {
                        None => {
                            return Err(Diag::error(
                                path,
                                Span::new(line, col, len),
                                codes::LEX_UNTERMINATED_STRING,
                                "unterminated string literal",
                            ))
                        }
                        Some('"') => break,
                        Some('\\') => {
                            len += 2;
                            match cur.bump() {
                                Some('"') => out.push('"'),
                                Some('\\') => out.push('\\'),
                                Some('n') => out.push('\n'),
                                Some('t') => out.push('\t'),
                                Some('r') => out.push('\r'),
                                Some(other) => {
                                    out.push('\\');
                                    out.push(other);
                                }
                                None => {
                                    return Err(Diag::error(
                                        path,
                                        Span::new(line, col, len),
                                        codes::LEX_UNTERMINATED_STRING,
                                        "unterminated string literal",
                                    ))
                                }
                            }
                        }
                        Some('\n') => {
                            return Err(Diag::error(
                                path,
                                Span::new(line, col, len),
                                codes::LEX_UNTERMINATED_STRING,
                                "unterminated string literal",
                            ))
                        }
                        Some(other) => {
                            len += 1;
                            out.push(other);
                        }
                    }
                }
                tokens.push(Token { kind: TokenKind::Str(out), span: Span::new(line, col, len) });
            }
            '-' => {
                cur.bump();
                // A minus directly before digits is a negative literal unless
                // the previous token could end an operand (arithmetic).
                let after_operand = matches!(
                    tokens.last().map(|t| &t.kind),
                    Some(TokenKind::Int(_))
                        | Some(TokenKind::Str(_))
                        | Some(TokenKind::Ident(_))
                        | Some(TokenKind::RParen)
                        | Some(TokenKind::RBrace)
                );
                if !after_operand && cur.peek().is_some_and(|c| c.is_ascii_digit()) {
                    let (n, len) = lex_int(&mut cur);
                    tokens.push(Token { kind: TokenKind::Int(-n), span: Span::new(line, col, len + 1) });
                } else if cur.peek() == Some('>') {
                    cur.bump();
                    tokens.push(Token { kind: TokenKind::Arrow, span: Span::new(line, col, 2) });
                } else {
                    tokens.push(Token { kind: TokenKind::Minus, span: span1 });
                }
            }
            ':' => {
                cur.bump();
                match cur.peek() {
                    Some(':') => {
                        cur.bump();
                        if cur.peek() == Some('=') {
                            cur.bump();
                            tokens.push(Token { kind: TokenKind::ColonColonEq, span: Span::new(line, col, 3) });
                        } else {
                            tokens.push(Token { kind: TokenKind::ColonColon, span: Span::new(line, col, 2) });
                        }
                    }
                    Some('-') => {
                        cur.bump();
                        tokens.push(Token { kind: TokenKind::ColonDash, span: Span::new(line, col, 2) });
                    }
                    _ => tokens.push(Token { kind: TokenKind::Colon, span: span1 }),
                }
            }
            '!' => {
                cur.bump();
                if cur.peek() == Some('=') {
                    cur.bump();
                    tokens.push(Token { kind: TokenKind::Ne, span: Span::new(line, col, 2) });
                } else {
                    return Err(Diag::error(path, span1, codes::LEX_ILLEGAL_CHAR, "illegal character `!`"));
                }
            }
            '<' => {
                cur.bump();
                if cur.peek() == Some('=') {
                    cur.bump();
                    tokens.push(Token { kind: TokenKind::Le, span: Span::new(line, col, 2) });
                } else {
                    tokens.push(Token { kind: TokenKind::Lt, span: span1 });
                }
            }
            '>' => {
                cur.bump();
                if cur.peek() == Some('=') {
                    cur.bump();
                    tokens.push(Token { kind: TokenKind::Ge, span: Span::new(line, col, 2) });
                } else {
                    tokens.push(Token { kind: TokenKind::Gt, span: span1 });
                }
            }
            _ => {
                cur.bump();
                let kind = match c {
                    '.' => TokenKind::Dot,
                    ',' => TokenKind::Comma,
                    ';' => TokenKind::Semi,
                    '(' => TokenKind::LParen,
                    ')' => TokenKind::RParen,
                    '{' => TokenKind::LBrace,
                    '}' => TokenKind::RBrace,
                    '+' => TokenKind::Plus,
                    '*' => TokenKind::Star,
                    '=' => TokenKind::Eq,
                    '|' => TokenKind::Pipe,
                    other => {
                        return Err(Diag::error(
                            path,
                            span1,
                            codes::LEX_ILLEGAL_CHAR,
                            format!("illegal character `{}`", other),
                        ))
                    }
                };
                tokens.push(Token { kind, span: span1 });
            }
        }
    }
}

fn lex_word(cur: &mut Cursor) -> String {
    let mut word = String::new();
    while let Some(c) = cur.peek() {
        if is_ident_continue(c) {
            word.push(c);
            cur.bump();
        } else {
            break;
        }
    }
    // Trailing primes belong to the identifier: s', e'''.
    while cur.peek() == Some('\'') {
        word.push('\'');
        cur.bump();
    }
    word
}

fn lex_int(cur: &mut Cursor) -> (BigInt, u32) {
    let mut digits = String::new();
    while let Some(c) = cur.peek() {
        if c.is_ascii_digit() {
            digits.push(c);
            cur.bump();
        } else {
            break;
        }
    }
    let len = digits.len() as u32;
    (digits.parse::<BigInt>().expect("digits"), len)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(text: &str) -> Vec<TokenKind> {
        tokenize("test", text).unwrap().into_iter().map(|t| t.kind).collect()
    }

    #[test]
    fn state_decl_tokens() {
        // State ::= new (id: Integer).
        let ks = kinds("State ::= new (id: Integer).");
        assert_eq!(
            ks,
            vec![
                TokenKind::Ident(vec!["State".into()]),
                TokenKind::ColonColonEq,
                TokenKind::KwNew,
                TokenKind::LParen,
                TokenKind::Ident(vec!["id".into()]),
                TokenKind::Colon,
                TokenKind::Ident(vec!["Integer".into()]),
                TokenKind::RParen,
                TokenKind::Dot,
                TokenKind::Eof,
            ]
        );
    }

    #[test]
    fn empty_text() {
        assert_eq!(kinds(""), vec![TokenKind::Eof]);
    }

    #[test]
    fn primes_in_identifiers() {
        let ks = kinds("Trans(s', _, s)");
        assert_eq!(
            ks,
            vec![
                TokenKind::Ident(vec!["Trans".into()]),
                TokenKind::LParen,
                TokenKind::Ident(vec!["s'".into()]),
                TokenKind::Comma,
                TokenKind::Underscore,
                TokenKind::Comma,
                TokenKind::Ident(vec!["s".into()]),
                TokenKind::RParen,
                TokenKind::Eof,
            ]
        );
    }

    #[test]
    fn qualified_vs_terminator_dot() {
        let ks = kinds("requires in.conforms.");
        assert_eq!(
            ks,
            vec![
                TokenKind::KwRequires,
                TokenKind::Ident(vec!["in".into(), "conforms".into()]),
                TokenKind::Dot,
                TokenKind::Eof,
            ]
        );
    }

    #[test]
    fn fact_dot_then_statement() {
        let ks = kinds("Init(s1).\nTrans(s1, eFoo, s2).");
        assert!(ks.contains(&TokenKind::Dot));
        assert!(ks.contains(&TokenKind::Ident(vec!["Trans".into()])));
    }

    #[test]
    fn comments_discarded() {
        let ks = kinds("//// banner\n// line\nState(1). // trailing");
        assert_eq!(
            ks,
            vec![
                TokenKind::Ident(vec!["State".into()]),
                TokenKind::LParen,
                TokenKind::Int(BigInt::from(1)),
                TokenKind::RParen,
                TokenKind::Dot,
                TokenKind::Eof,
            ]
        );
    }

    #[test]
    fn negative_literal_vs_minus() {
        let ks = kinds("{ -3, 5 }");
        assert_eq!(
            ks,
            vec![
                TokenKind::LBrace,
                TokenKind::Int(BigInt::from(-3)),
                TokenKind::Comma,
                TokenKind::Int(BigInt::from(5)),
                TokenKind::RBrace,
                TokenKind::Eof,
            ]
        );
        let ks = kinds("x - 3");
        assert_eq!(
            ks,
            vec![
                TokenKind::Ident(vec!["x".into()]),
                TokenKind::Minus,
                TokenKind::Int(BigInt::from(3)),
                TokenKind::Eof,
            ]
        );
    }

    #[test]
    fn string_escapes_and_errors() {
        let ks = kinds(r#""a\"b\\c""#);
        assert_eq!(ks[0], TokenKind::Str("a\"b\\c".into()));
        let err = tokenize("test", "\"open").unwrap_err();
        assert_eq!(err.code, codes::LEX_UNTERMINATED_STRING);
        let err = tokenize("test", "a # b").unwrap_err();
        assert_eq!(err.code, codes::LEX_ILLEGAL_CHAR);
        assert_eq!(err.col, 3);
    }

    #[test]
    fn colon_family() {
        let ks = kinds("a ::= b :- c : d :: e");
        assert!(ks.contains(&TokenKind::ColonColonEq));
        assert!(ks.contains(&TokenKind::ColonDash));
        assert!(ks.contains(&TokenKind::Colon));
        assert!(ks.contains(&TokenKind::ColonColon));
    }

    #[test]
    fn spans_track_lines() {
        let toks = tokenize("test", "a\n  bb\n").unwrap();
        assert_eq!(toks[0].span, Span::new(1, 1, 1));
        assert_eq!(toks[1].span, Span::new(2, 3, 2));
    }
}
