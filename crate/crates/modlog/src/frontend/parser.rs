//! Recursive descent parser producing the raw AST.
//!
//! Recovery is per module: on the first error inside a module declaration
//! the parser reports it and skips ahead to the next top-level declaration.

use super::ast::*;
use super::lexer::{tokenize, Token, TokenKind};
use crate::diag::{codes, Diag, Span};

/// Hard bound on syntactic nesting (term arguments, parenthesized
/// expressions, comprehensions); deeper input gets a diagnostic instead of
/// exhausting the stack.
const MAX_NESTING: u32 = 200;

pub struct Parser<'a> {
    path: &'a str,
    tokens: Vec<Token>,
    pos: usize,
    diags: Vec<Diag>,
    depth: u32,
}

type PResult<T> = Result<T, Diag>;

/// Tokenizes and parses one source file.
pub fn parse_source(path: &str, text: &str) -> Result<SourceUnit, Vec<Diag>> {
    let tokens = match tokenize(path, text) {
        Ok(t) => t,
        Err(d) => return Err(vec![d]),
    };
    parse_tokens(path, tokens)
}

/// Parses a token stream into a source unit.
pub fn parse_tokens(path: &str, tokens: Vec<Token>) -> Result<SourceUnit, Vec<Diag>> {
    let mut p = Parser { path, tokens, pos: 0, diags: Vec::new(), depth: 0 };
    let unit = p.unit();
    if p.diags.is_empty() {
        Ok(unit)
    } else {
        Err(p.diags)
    }
}

/// Parses a query goal: a rule body, optionally ending with `.`.
pub fn parse_goal(path: &str, text: &str) -> Result<RawBody, Vec<Diag>> {
    let tokens = match tokenize(path, text) {
        Ok(t) => t,
        Err(d) => return Err(vec![d]),
    };
    let mut p = Parser { path, tokens, pos: 0, diags: Vec::new(), depth: 0 };
    let body = p.body().map_err(|d| vec![d])?;
    p.eat(&TokenKind::Dot);
    if !p.at(&TokenKind::Eof) {
        return Err(vec![p.err(
            p.span(),
            format!("unexpected {} after goal", p.peek().describe()),
        )]);
    }
    Ok(body)
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &TokenKind {
        &self.tokens[self.pos].kind
    }

    fn peek_at(&self, n: usize) -> &TokenKind {
        let idx = (self.pos + n).min(self.tokens.len() - 1);
        &self.tokens[idx].kind
    }

    fn span(&self) -> Span {
        self.tokens[self.pos].span
    }

    fn advance(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn at(&self, kind: &TokenKind) -> bool {
        self.peek() == kind
    }

    fn eat(&mut self, kind: &TokenKind) -> bool {
        if self.at(kind) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn err(&self, span: Span, message: impl Into<String>) -> Diag {
        Diag::error(self.path, span, codes::PARSE_SYNTAX, message)
    }

    fn descend(&mut self) -> PResult<()> {
        self.depth += 1;
        if self.depth > MAX_NESTING {
            Err(self.err(self.span(), format!("nesting deeper than {} levels", MAX_NESTING)))
        } else {
            Ok(())
        }
    }

    fn ascend(&mut self) {
        self.depth -= 1;
    }

    fn expect(&mut self, kind: TokenKind) -> PResult<Token> {
        if self.at(&kind) {
            Ok(self.advance())
        } else {
            Err(self.err(
                self.span(),
                format!("expected {}, found {}", kind.describe(), self.peek().describe()),
            ))
        }
    }

    /// A single-segment identifier.
    fn plain_ident(&mut self, what: &str) -> PResult<(String, Span)> {
        match self.peek().clone() {
            TokenKind::Ident(segs) if segs.len() == 1 => {
                let span = self.span();
                self.advance();
                Ok((segs.into_iter().next().unwrap(), span))
            }
            other => Err(self.err(self.span(), format!("expected {}, found {}", what, other.describe()))),
        }
    }

    fn qual_ident(&mut self, what: &str) -> PResult<RawQual> {
        match self.peek().clone() {
            TokenKind::Ident(segs) => {
                let span = self.span();
                self.advance();
                Ok(RawQual { segments: segs, span })
            }
            other => Err(self.err(self.span(), format!("expected {}, found {}", what, other.describe()))),
        }
    }

    // ----- recovery -----

    /// Skips to the next top-level module keyword outside any braces.
    fn sync_to_module(&mut self) {
        let mut depth: i32 = 0;
        loop {
            match self.peek() {
                TokenKind::Eof => return,
                TokenKind::LBrace => {
                    depth += 1;
                    self.advance();
                }
                TokenKind::RBrace => {
                    depth -= 1;
                    self.advance();
                }
                TokenKind::KwDomain | TokenKind::KwModel | TokenKind::KwTransform if depth <= 0 => {
                    return;
                }
                _ => {
                    self.advance();
                }
            }
        }
    }

    // ----- top level -----

    fn unit(&mut self) -> SourceUnit {
        let mut decls: Vec<RawModuleDecl> = Vec::new();
        loop {
            match self.peek() {
                TokenKind::Eof => break,
                TokenKind::KwDomain | TokenKind::KwModel | TokenKind::KwTransform => {
                    self.depth = 0;
                    match self.module_decl() {
                        Ok(decl) => {
                            if decls.iter().any(|d| d.kind == decl.kind && d.name == decl.name) {
                                self.diags.push(Diag::error(
                                    self.path,
                                    decl.span,
                                    codes::PARSE_DUPLICATE_MODULE,
                                    format!("duplicate {} name `{}`", decl.kind, decl.name),
                                ));
                            } else {
                                decls.push(decl);
                            }
                        }
                        Err(d) => {
                            self.diags.push(d);
                            self.sync_to_module();
                        }
                    }
                }
                other => {
                    let d = self.err(
                        self.span(),
                        format!("expected `domain`, `model`, or `transform`, found {}", other.describe()),
                    );
                    self.diags.push(d);
                    self.sync_to_module();
                    if matches!(self.peek(), TokenKind::Eof) {
                        break;
                    }
                }
            }
        }
        SourceUnit { path: self.path.to_string(), decls }
    }

    fn module_decl(&mut self) -> PResult<RawModuleDecl> {
        match self.peek() {
            TokenKind::KwDomain => self.domain_decl(),
            TokenKind::KwModel => self.model_decl(),
            TokenKind::KwTransform => {
                if matches!(self.peek_at(1), TokenKind::KwSystem) {
                    self.system_decl()
                } else {
                    self.transform_decl()
                }
            }
            _ => unreachable!(),
        }
    }

    fn import_list(&mut self) -> PResult<Vec<RawImport>> {
        let mut imports = Vec::new();
        loop {
            let (first, span) = self.plain_ident("module name")?;
            if self.eat(&TokenKind::ColonColon) {
                let (target, _) = self.plain_ident("module name")?;
                imports.push(RawImport { prefix: Some(first), target, span });
            } else {
                imports.push(RawImport { prefix: None, target: first, span });
            }
            if !self.eat(&TokenKind::Comma) {
                break;
            }
        }
        Ok(imports)
    }

    fn domain_decl(&mut self) -> PResult<RawModuleDecl> {
        let kw = self.expect(TokenKind::KwDomain)?;
        let (name, _) = self.plain_ident("domain name")?;
        let (import_mode, imports) = match self.peek() {
            TokenKind::KwIncludes => {
                self.advance();
                (ImportMode::Includes, self.import_list()?)
            }
            TokenKind::KwExtends => {
                self.advance();
                (ImportMode::Extends, self.import_list()?)
            }
            _ => (ImportMode::None, Vec::new()),
        };
        self.expect(TokenKind::LBrace)?;
        let mut items = Vec::new();
        while !self.at(&TokenKind::RBrace) {
            items.push(self.domain_item()?);
        }
        self.expect(TokenKind::RBrace)?;
        Ok(RawModuleDecl {
            kind: ModuleKind::Domain,
            name,
            span: kw.span,
            of_target: None,
            import_mode,
            imports,
            sig_inputs: Vec::new(),
            sig_outputs: Vec::new(),
            items,
        })
    }

    fn model_decl(&mut self) -> PResult<RawModuleDecl> {
        let kw = self.expect(TokenKind::KwModel)?;
        let (name, _) = self.plain_ident("model name")?;
        self.expect(TokenKind::KwOf)?;
        let (target, tspan) = self.plain_ident("domain name")?;
        let of_target = Some(RawImport { prefix: None, target, span: tspan });
        let (import_mode, imports) = if self.eat(&TokenKind::KwIncludes) {
            (ImportMode::Includes, self.import_list()?)
        } else {
            (ImportMode::None, Vec::new())
        };
        self.expect(TokenKind::LBrace)?;
        let mut items = Vec::new();
        while !self.at(&TokenKind::RBrace) {
            items.push(self.model_item()?);
        }
        self.expect(TokenKind::RBrace)?;
        Ok(RawModuleDecl {
            kind: ModuleKind::Model,
            name,
            span: kw.span,
            of_target,
            import_mode,
            imports,
            sig_inputs: Vec::new(),
            sig_outputs: Vec::new(),
            items,
        })
    }

    fn sig_list(&mut self) -> PResult<Vec<RawSig>> {
        let mut sigs = Vec::new();
        self.expect(TokenKind::LParen)?;
        loop {
            let (label, span) = self.plain_ident("signature label")?;
            self.expect(TokenKind::ColonColon)?;
            let (domain, _) = self.plain_ident("domain name")?;
            sigs.push(RawSig { label, domain, span });
            if !self.eat(&TokenKind::Comma) {
                break;
            }
        }
        self.expect(TokenKind::RParen)?;
        Ok(sigs)
    }

    fn transform_decl(&mut self) -> PResult<RawModuleDecl> {
        let kw = self.expect(TokenKind::KwTransform)?;
        let (name, _) = self.plain_ident("transform name")?;
        let sig_inputs = self.sig_list()?;
        self.expect(TokenKind::KwReturns)?;
        let sig_outputs = self.sig_list()?;
        self.expect(TokenKind::LBrace)?;
        let mut items = Vec::new();
        while !self.at(&TokenKind::RBrace) {
            items.push(self.transform_item()?);
        }
        self.expect(TokenKind::RBrace)?;
        Ok(RawModuleDecl {
            kind: ModuleKind::Transform,
            name,
            span: kw.span,
            of_target: None,
            import_mode: ImportMode::None,
            imports: Vec::new(),
            sig_inputs,
            sig_outputs,
            items,
        })
    }

    fn system_decl(&mut self) -> PResult<RawModuleDecl> {
        let kw = self.expect(TokenKind::KwTransform)?;
        self.expect(TokenKind::KwSystem)?;
        let (name, _) = self.plain_ident("transform system name")?;
        let sig_inputs = self.sig_list()?;
        self.expect(TokenKind::KwReturns)?;
        let sig_outputs = self.sig_list()?;
        self.expect(TokenKind::LBrace)?;
        let mut items = Vec::new();
        while !self.at(&TokenKind::RBrace) {
            items.push(self.pipeline_eq()?);
        }
        self.expect(TokenKind::RBrace)?;
        Ok(RawModuleDecl {
            kind: ModuleKind::TransformSystem,
            name,
            span: kw.span,
            of_target: None,
            import_mode: ImportMode::None,
            imports: Vec::new(),
            sig_inputs,
            sig_outputs,
            items,
        })
    }

    // ----- items -----

    fn domain_item(&mut self) -> PResult<RawItem> {
        match self.peek() {
            TokenKind::KwConforms => {
                let span = self.advance().span;
                let body = self.body()?;
                self.expect(TokenKind::Dot)?;
                Ok(RawItem::Conforms(RawClause { body, span }))
            }
            TokenKind::Ident(_) if matches!(self.peek_at(1), TokenKind::ColonColonEq) => {
                self.type_decl().map(RawItem::TypeDecl)
            }
            TokenKind::Ident(_) => self.rule().map(RawItem::Rule),
            other => Err(self.err(
                self.span(),
                format!("expected type declaration, rule, or `conforms`, found {}", other.describe()),
            )),
        }
    }

    fn transform_item(&mut self) -> PResult<RawItem> {
        match self.peek() {
            TokenKind::KwRequires => {
                let span = self.advance().span;
                let body = self.body()?;
                self.expect(TokenKind::Dot)?;
                Ok(RawItem::Requires(RawClause { body, span }))
            }
            TokenKind::KwEnsures => {
                let span = self.advance().span;
                let body = self.body()?;
                self.expect(TokenKind::Dot)?;
                Ok(RawItem::Ensures(RawClause { body, span }))
            }
            TokenKind::Ident(_) if matches!(self.peek_at(1), TokenKind::ColonColonEq) => {
                self.type_decl().map(RawItem::TypeDecl)
            }
            TokenKind::Ident(_) => self.rule().map(RawItem::Rule),
            other => Err(self.err(
                self.span(),
                format!(
                    "expected type declaration, rule, `requires`, or `ensures`, found {}",
                    other.describe()
                ),
            )),
        }
    }

    fn model_item(&mut self) -> PResult<RawItem> {
        match self.peek() {
            TokenKind::Ident(segs) if segs.len() == 1 && matches!(self.peek_at(1), TokenKind::KwIs) => {
                let (name, span) = self.plain_ident("symbolic constant name")?;
                self.expect(TokenKind::KwIs)?;
                let value = self.term()?;
                self.expect(TokenKind::Dot)?;
                Ok(RawItem::SymConst(RawSymConst { name, value, span }))
            }
            TokenKind::Ident(_) => {
                let t = self.term()?;
                self.expect(TokenKind::Dot)?;
                Ok(RawItem::Fact(t))
            }
            other => Err(self.err(
                self.span(),
                format!("expected fact or symbolic constant definition, found {}", other.describe()),
            )),
        }
    }

    fn pipeline_eq(&mut self) -> PResult<RawItem> {
        let start = self.span();
        let mut lhs = Vec::new();
        loop {
            let (v, _) = self.plain_ident("output variable")?;
            lhs.push(v);
            if !self.eat(&TokenKind::Comma) {
                break;
            }
        }
        self.expect(TokenKind::Eq)?;
        let (callee, _) = self.plain_ident("transform name")?;
        self.expect(TokenKind::LParen)?;
        let mut args = Vec::new();
        if !self.at(&TokenKind::RParen) {
            loop {
                let (a, _) = self.plain_ident("argument name")?;
                args.push(a);
                if !self.eat(&TokenKind::Comma) {
                    break;
                }
            }
        }
        self.expect(TokenKind::RParen)?;
        self.expect(TokenKind::Dot)?;
        Ok(RawItem::Pipeline(RawPipelineEq { lhs, callee, args, span: start }))
    }

    // ----- type declarations -----

    fn type_decl(&mut self) -> PResult<RawTypeDecl> {
        let (name, span) = self.plain_ident("type name")?;
        self.expect(TokenKind::ColonColonEq)?;
        let marker = match self.peek() {
            TokenKind::KwNew => {
                self.advance();
                CtorMarker::New
            }
            TokenKind::KwFun => {
                self.advance();
                CtorMarker::Fun
            }
            _ => CtorMarker::Derived,
        };
        let body = if self.at(&TokenKind::LParen) {
            self.advance();
            let mut fields = Vec::new();
            let mut fun_split: Option<usize> = None;
            loop {
                fields.push(self.field()?);
                match self.peek() {
                    TokenKind::Comma => {
                        self.advance();
                    }
                    TokenKind::Arrow => {
                        let sp = self.advance().span;
                        if fun_split.is_some() {
                            return Err(self.err(sp, "more than one `->` in a constructor declaration"));
                        }
                        fun_split = Some(fields.len());
                    }
                    _ => break,
                }
            }
            self.expect(TokenKind::RParen)?;
            if fun_split.is_some() && marker != CtorMarker::Fun {
                return Err(self.err(span, "`->` requires the `fun` marker"));
            }
            if marker == CtorMarker::Fun && fun_split.is_none() {
                return Err(self.err(span, "`fun` constructor needs `->` separating domain from range fields"));
            }
            RawTypeDeclBody::Ctor { fields, fun_split }
        } else {
            if marker != CtorMarker::Derived {
                return Err(self.err(span, "`new`/`fun` markers apply only to constructor declarations"));
            }
            RawTypeDeclBody::Union(self.type_expr()?)
        };
        self.expect(TokenKind::Dot)?;
        Ok(RawTypeDecl { name, span, marker, body })
    }

    fn field(&mut self) -> PResult<RawField> {
        let span = self.span();
        let name = match (self.peek(), self.peek_at(1)) {
            (TokenKind::Ident(segs), TokenKind::Colon) if segs.len() == 1 => {
                let n = segs[0].clone();
                self.advance();
                self.advance();
                Some(n)
            }
            _ => None,
        };
        let any = self.eat(&TokenKind::KwAny);
        let ty = self.type_expr()?;
        Ok(RawField { name, any, ty, span })
    }

    fn type_expr(&mut self) -> PResult<RawTypeExpr> {
        let mut atoms = vec![self.type_atom()?];
        while self.eat(&TokenKind::Plus) {
            atoms.push(self.type_atom()?);
        }
        Ok(RawTypeExpr { atoms })
    }

    fn type_atom(&mut self) -> PResult<RawTypeAtom> {
        match self.peek().clone() {
            TokenKind::LBrace => {
                let span = self.advance().span;
                let mut consts = Vec::new();
                loop {
                    consts.push(self.const_atom()?);
                    if !self.eat(&TokenKind::Comma) {
                        break;
                    }
                }
                self.expect(TokenKind::RBrace)?;
                Ok(RawTypeAtom::ConstSet(consts, span))
            }
            TokenKind::Ident(_) => {
                let q = self.qual_ident("type name")?;
                if self.at(&TokenKind::LParen) {
                    // Per-argument refinement such as `S(Odd)` is outside
                    // this type language.
                    return Err(self.err(
                        self.span(),
                        format!(
                            "type `{}` cannot be refined by arguments here; union members are type names or constant sets",
                            q.dotted()
                        ),
                    ));
                }
                Ok(RawTypeAtom::Name(q))
            }
            other => Err(self.err(self.span(), format!("expected type atom, found {}", other.describe()))),
        }
    }

    fn const_atom(&mut self) -> PResult<RawConst> {
        match self.peek().clone() {
            TokenKind::Int(n) => {
                self.advance();
                Ok(RawConst::Int(n))
            }
            TokenKind::Str(s) => {
                self.advance();
                Ok(RawConst::Str(s))
            }
            TokenKind::Ident(_) => Ok(RawConst::Name(self.qual_ident("constant name")?)),
            other => Err(self.err(self.span(), format!("expected constant, found {}", other.describe()))),
        }
    }

    // ----- rules and bodies -----

    fn rule(&mut self) -> PResult<RawRule> {
        let span = self.span();
        let mut heads = vec![self.head_atom()?];
        while self.eat(&TokenKind::Comma) {
            heads.push(self.head_atom()?);
        }
        self.expect(TokenKind::ColonDash)?;
        let body = self.body()?;
        self.expect(TokenKind::Dot)?;
        Ok(RawRule { heads, body, span })
    }

    fn head_atom(&mut self) -> PResult<RawTerm> {
        let t = self.term()?;
        match &t {
            RawTerm::Name(_) | RawTerm::Apply(..) => Ok(t),
            other => Err(self.err(other.span(), "rule head must be a constructor atom or constant")),
        }
    }

    fn body(&mut self) -> PResult<RawBody> {
        let mut disjuncts = vec![self.conjunct()?];
        while self.eat(&TokenKind::Semi) {
            disjuncts.push(self.conjunct()?);
        }
        Ok(RawBody { disjuncts })
    }

    fn conjunct(&mut self) -> PResult<Vec<RawLiteral>> {
        let mut lits = vec![self.literal()?];
        while self.eat(&TokenKind::Comma) {
            lits.push(self.literal()?);
        }
        Ok(lits)
    }

    fn literal(&mut self) -> PResult<RawLiteral> {
        if self.at(&TokenKind::KwNo) {
            let span = self.advance().span;
            if self.at(&TokenKind::LBrace) {
                let comp = self.comprehension()?;
                return Ok(RawLiteral::NoComp(comp, span));
            }
            let atom = self.term()?;
            match &atom {
                RawTerm::Name(_) | RawTerm::Apply(..) => return Ok(RawLiteral::NoAtom(atom, span)),
                other => return Err(self.err(other.span(), "`no` expects an atom or a comprehension")),
            }
        }

        let lhs = self.expr()?;
        let span = self.span();
        match self.peek().clone() {
            TokenKind::KwIs => {
                self.advance();
                let name = match &lhs {
                    RawExpr::Term(RawTerm::Name(q)) if q.is_plain() => q.segments[0].clone(),
                    _ => {
                        return Err(self.err(span, "left side of `is` must be a variable name"));
                    }
                };
                let ty = self.type_expr()?;
                Ok(RawLiteral::IsMember(name, ty, span))
            }
            TokenKind::Colon => {
                self.advance();
                let term = match lhs {
                    RawExpr::Term(t) => t,
                    _ => return Err(self.err(span, "left side of `:` must be a term")),
                };
                let ty = self.type_expr()?;
                Ok(RawLiteral::TypeTest(term, ty, span))
            }
            tk => {
                let op = match tk {
                    TokenKind::Eq => Some(CompareOp::Eq),
                    TokenKind::Ne => Some(CompareOp::Ne),
                    TokenKind::Lt => Some(CompareOp::Lt),
                    TokenKind::Le => Some(CompareOp::Le),
                    TokenKind::Gt => Some(CompareOp::Gt),
                    TokenKind::Ge => Some(CompareOp::Ge),
                    _ => None,
                };
                match op {
                    Some(op) => {
                        self.advance();
                        let rhs = self.expr()?;
                        Ok(RawLiteral::Compare(lhs, op, rhs, span))
                    }
                    None => match lhs {
                        RawExpr::Term(t @ RawTerm::Name(_)) | RawExpr::Term(t @ RawTerm::Apply(..)) => {
                            Ok(RawLiteral::Atom(t))
                        }
                        _ => Err(self.err(span, format!("expected a literal, found {}", self.peek().describe()))),
                    },
                }
            }
        }
    }

    fn expr(&mut self) -> PResult<RawExpr> {
        let mut lhs = self.mul_expr()?;
        loop {
            let op = match self.peek() {
                TokenKind::Plus => ArithOp::Add,
                TokenKind::Minus => ArithOp::Sub,
                _ => break,
            };
            let span = self.advance().span;
            let rhs = self.mul_expr()?;
            lhs = RawExpr::Binary(op, Box::new(lhs), Box::new(rhs), span);
        }
        Ok(lhs)
    }

    fn mul_expr(&mut self) -> PResult<RawExpr> {
        let mut lhs = self.primary_expr()?;
        while self.at(&TokenKind::Star) {
            let span = self.advance().span;
            let rhs = self.primary_expr()?;
            lhs = RawExpr::Binary(ArithOp::Mul, Box::new(lhs), Box::new(rhs), span);
        }
        Ok(lhs)
    }

    fn primary_expr(&mut self) -> PResult<RawExpr> {
        match self.peek() {
            TokenKind::KwCount => {
                let span = self.advance().span;
                self.expect(TokenKind::LParen)?;
                let comp = self.comprehension()?;
                self.expect(TokenKind::RParen)?;
                Ok(RawExpr::Count(comp, span))
            }
            TokenKind::LParen => {
                self.descend()?;
                self.advance();
                let e = self.expr();
                self.ascend();
                let e = e?;
                self.expect(TokenKind::RParen)?;
                Ok(e)
            }
            _ => Ok(RawExpr::Term(self.term()?)),
        }
    }

    fn comprehension(&mut self) -> PResult<RawComprehension> {
        self.descend()?;
        let result = self.comprehension_inner();
        self.ascend();
        result
    }

    fn comprehension_inner(&mut self) -> PResult<RawComprehension> {
        let span = self.expect(TokenKind::LBrace)?.span;
        let head = self.term()?;
        self.expect(TokenKind::Pipe)?;
        let body = self.body()?;
        self.expect(TokenKind::RBrace)?;
        Ok(RawComprehension { head, body, span })
    }

    fn term(&mut self) -> PResult<RawTerm> {
        self.descend()?;
        let result = self.term_inner();
        self.ascend();
        result
    }

    fn term_inner(&mut self) -> PResult<RawTerm> {
        match self.peek().clone() {
            TokenKind::Int(n) => {
                let span = self.advance().span;
                Ok(RawTerm::Int(n, span))
            }
            TokenKind::Str(s) => {
                let span = self.advance().span;
                Ok(RawTerm::Str(s, span))
            }
            TokenKind::Underscore => {
                let span = self.advance().span;
                Ok(RawTerm::Wildcard(span))
            }
            TokenKind::Ident(_) => {
                let q = self.qual_ident("term")?;
                if self.eat(&TokenKind::LParen) {
                    let span = q.span;
                    let mut args = Vec::new();
                    if !self.at(&TokenKind::RParen) {
                        loop {
                            args.push(self.term()?);
                            if !self.eat(&TokenKind::Comma) {
                                break;
                            }
                        }
                    }
                    self.expect(TokenKind::RParen)?;
                    Ok(RawTerm::Apply(q, args, span))
                } else {
                    Ok(RawTerm::Name(q))
                }
            }
            other => Err(self.err(self.span(), format!("expected term, found {}", other.describe()))),
        }
    }

}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG1: &str = r#"
domain NonDetFSM {
   // FSM Syntax
   State    ::= new (id: Integer).
   Event    ::= new (id: String).
   Trans    ::= new (src: State, ev: Event, dst: State).
   Init     ::= new (st: State).
   // Reachability judgment
   Reach    ::= (State).
   Reach(s) :- Init(s); Reach(s'), Trans(s', _, s).
   // There must be an initial state.
   conforms Init(_).
   conforms no { i | i is Init, no { s | s is State, s = i.st } }.
   conforms no { t | t is Trans, no { s | s is State, s = t.src } }.
   conforms no { t | t is Trans, no { s | s is State, s = t.dst } }.
   conforms no { t | t is Trans, no { s | s is Event, s = t.ev  } }.
}
"#;

    #[test]
    fn parses_fig1_shape() {
        let unit = parse_source("fig1", FIG1).unwrap();
        assert_eq!(unit.decls.len(), 1);
        let d = &unit.decls[0];
        assert_eq!(d.name, "NonDetFSM");
        let mut new_ctors = 0;
        let mut derived_ctors = 0;
        let mut rules = 0;
        let mut conforms = 0;
        for item in &d.items {
            match item {
                RawItem::TypeDecl(td) => match td.marker {
                    CtorMarker::New => new_ctors += 1,
                    CtorMarker::Derived => derived_ctors += 1,
                    CtorMarker::Fun => {}
                },
                RawItem::Rule(_) => rules += 1,
                RawItem::Conforms(_) => conforms += 1,
                _ => {}
            }
        }
        assert_eq!((new_ctors, derived_ctors, rules, conforms), (4, 1, 1, 5));
    }

    #[test]
    fn parses_renamed_extends() {
        let unit = parse_source(
            "fig6",
            "domain ParallelFSMs extends left::DetFSMWithActions, right::DetFSMWithActions {}",
        )
        .unwrap();
        let d = &unit.decls[0];
        assert_eq!(d.import_mode, ImportMode::Extends);
        assert_eq!(d.imports.len(), 2);
        assert_eq!(d.imports[0].prefix.as_deref(), Some("left"));
        assert_eq!(d.imports[1].target, "DetFSMWithActions");
        assert!(d.items.is_empty());
    }

    #[test]
    fn missing_dot_reports_brace() {
        let err = parse_source("t", "model M of D { X(1) }").unwrap_err();
        assert_eq!(err.len(), 1);
        assert!(err[0].message.contains("`.`"), "{}", err[0].message);
        assert!(err[0].message.contains("`}`"), "{}", err[0].message);
    }

    #[test]
    fn duplicate_module_name() {
        let err = parse_source("t", "domain D {} domain D {}").unwrap_err();
        assert_eq!(err[0].code, codes::PARSE_DUPLICATE_MODULE);
    }

    #[test]
    fn transform_and_system() {
        let text = r#"
transform Prune (in:: NonDetFSM) returns (out:: NonDetFSM)
{
   requires in.conforms.
   ensures out.conforms.
   out.Event(n) :- in.Event(n).
   out.State(x) :- in.Reach(State(x)).
   out.Init(s)  :- in.Init(s).
   out.Trans(s, e, s') :- in.Trans(s, e, s'), in.Reach(s), in.Reach(s').
}
transform system PruneAndParallelize (in1:: NonDetFSM, in2:: NonDetFSM)
returns (out:: ParallelFSMs)
{
   prune1 = Prune(in1).
   prune2 = Prune(in2).
   out    = Parallelize(prune1, prune2).
}
"#;
        let unit = parse_source("fig78", text).unwrap();
        assert_eq!(unit.decls.len(), 2);
        let t = &unit.decls[0];
        assert_eq!(t.kind, ModuleKind::Transform);
        assert_eq!(t.sig_inputs.len(), 1);
        assert_eq!(t.sig_outputs.len(), 1);
        assert_eq!(t.items.len(), 6);
        let s = &unit.decls[1];
        assert_eq!(s.kind, ModuleKind::TransformSystem);
        assert_eq!(s.items.len(), 3);
        match &s.items[2] {
            RawItem::Pipeline(eq) => {
                assert_eq!(eq.lhs, vec!["out"]);
                assert_eq!(eq.callee, "Parallelize");
                assert_eq!(eq.args, vec!["prune1", "prune2"]);
            }
            other => panic!("expected pipeline equation, got {:?}", other),
        }
    }

    #[test]
    fn fun_decl_and_count() {
        let text = r#"
domain D extends A {
   ActMap ::= fun (state: State -> actionName: String).
   conforms count({ s | Init(s) }) = 1.
}
"#;
        let unit = parse_source("fig4", text).unwrap();
        let d = &unit.decls[0];
        match &d.items[0] {
            RawItem::TypeDecl(td) => {
                assert_eq!(td.marker, CtorMarker::Fun);
                match &td.body {
                    RawTypeDeclBody::Ctor { fields, fun_split } => {
                        assert_eq!(fields.len(), 2);
                        assert_eq!(*fun_split, Some(1));
                    }
                    _ => panic!("expected ctor body"),
                }
            }
            other => panic!("expected type decl, got {:?}", other),
        }
        match &d.items[1] {
            RawItem::Conforms(c) => {
                assert!(matches!(c.body.disjuncts[0][0], RawLiteral::Compare(RawExpr::Count(..), CompareOp::Eq, _, _)));
            }
            other => panic!("expected conforms, got {:?}", other),
        }
    }

    #[test]
    fn model_with_symconsts() {
        let text = r#"
model TwoStateMach of NonDetFSM {
   s1 is State(1).
   s2 is State(2).
   eFoo is Event("foo").
   Init(s1).
   Trans(s1, eFoo, s2).
   Trans(s2, eFoo, s2).
}
"#;
        let unit = parse_source("fig2", text).unwrap();
        let d = &unit.decls[0];
        let symconsts = d.items.iter().filter(|i| matches!(i, RawItem::SymConst(_))).count();
        let facts = d.items.iter().filter(|i| matches!(i, RawItem::Fact(_))).count();
        assert_eq!((symconsts, facts), (3, 3));
    }

    #[test]
    fn union_with_argument_refinement_rejected() {
        let err = parse_source("evenodd", "domain E { Even ::= { 0 } + S(Odd). }").unwrap_err();
        assert!(err[0].message.contains("union members"), "{}", err[0].message);
    }

    #[test]
    fn multi_head_rule() {
        let text = "domain A { Sub ::= (Action). Sub(e), Sub(e') :- Sub(BnApp(_, e, e')); Sub(Seq(e, e')). }";
        let unit = parse_source("appendix", text).unwrap();
        match &unit.decls[0].items[1] {
            RawItem::Rule(r) => {
                assert_eq!(r.heads.len(), 2);
                assert_eq!(r.body.disjuncts.len(), 2);
            }
            other => panic!("expected rule, got {:?}", other),
        }
    }

    #[test]
    fn recovery_continues_after_bad_module() {
        let err = parse_source("t", "domain Bad { X ::= . } domain Bad2 { Y ::= ( } domain Ok {}").unwrap_err();
        // Two independent module errors are reported.
        assert_eq!(err.len(), 2);
    }
}
