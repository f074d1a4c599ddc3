//! Hand-written lexer and recursive-descent parser for the litmus DSL.
//!
//! Scope checking happens while parsing: shared declarations come first,
//! locals must be declared before use, and the top-level assert may name
//! shared variables or a local declared in exactly one thread.

use std::collections::HashSet;

use super::ast::{Ast, BinOp, Expr, SharedDecl, Stmt, Thread, UnOp};
use super::FrontendError;

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Int(i64),
    Punct(&'static str),
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

const PUNCTS: [&str; 20] = [
    "==", "!=", "<=", ">=", "&&", "||", "+", "-", "*", "<", ">", "!", "=", ";", "{", "}", "(", ")", ",", "%",
];

fn lex(src: &str) -> Result<Vec<Token>, FrontendError> {
    let mut out = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let (start_line, start_col) = (line, col);
        if c.is_ascii_alphabetic() || c == '_' {
            let s = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            col += i - s;
            out.push(Token { tok: Tok::Ident(chars[s..i].iter().collect()), line: start_line, col: start_col });
            continue;
        }
        if c.is_ascii_digit() {
            let s = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            col += i - s;
            let text: String = chars[s..i].iter().collect();
            let v = text.parse::<i64>().map_err(|_| FrontendError::Syntax {
                line: start_line,
                col: start_col,
                msg: format!("integer literal `{text}` is too large"),
            })?;
            out.push(Token { tok: Tok::Int(v), line: start_line, col: start_col });
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
        let p = PUNCTS.iter().find(|p| rest.starts_with(*p)).copied().ok_or_else(|| FrontendError::Syntax {
            line,
            col,
            msg: format!("unexpected character `{c}`"),
        })?;
        if p == "%" || p == "," {
            return Err(FrontendError::Syntax { line, col, msg: format!("operator `{p}` is not supported") });
        }
        i += p.len();
        col += p.len();
        out.push(Token { tok: Tok::Punct(p), line: start_line, col: start_col });
    }
    out.push(Token { tok: Tok::Eof, line, col });
    Ok(out)
}

const KEYWORDS: [&str; 9] = ["var", "thread", "local", "if", "else", "while", "fence", "assert", "assume"];

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    shared: HashSet<String>,
    // locals of the thread being parsed
    locals: HashSet<String>,
    // (thread, local) for every finished thread
    all_locals: Vec<(usize, String)>,
    in_thread: bool,
}

/// Parses DSL source text into an [`Ast`].
pub fn parse(src: &str) -> Result<Ast, FrontendError> {
    let mut p = Parser {
        toks: lex(src)?,
        pos: 0,
        shared: HashSet::new(),
        locals: HashSet::new(),
        all_locals: Vec::new(),
        in_thread: false,
    };
    p.program()
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, FrontendError> {
        let t = self.peek();
        Err(FrontendError::Syntax { line: t.line, col: t.col, msg: msg.into() })
    }

    fn at_kw(&self, kw: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(s) if s == kw)
    }

    fn at_punct(&self, p: &str) -> bool {
        matches!(&self.peek().tok, Tok::Punct(s) if *s == p)
    }

    fn expect_punct(&mut self, p: &str) -> Result<(), FrontendError> {
        if self.at_punct(p) {
            self.bump();
            Ok(())
        } else {
            self.err(format!("expected `{p}`, found {}", describe(&self.peek().tok)))
        }
    }

    fn ident(&mut self) -> Result<(String, usize, usize), FrontendError> {
        let t = self.peek().clone();
        match t.tok {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                self.bump();
                Ok((s, t.line, t.col))
            }
            other => self.err(format!("expected identifier, found {}", describe(&other))),
        }
    }

    fn program(&mut self) -> Result<Ast, FrontendError> {
        let mut shared = Vec::new();
        while self.at_kw("var") {
            self.bump();
            let (name, line, col) = self.ident()?;
            if !self.shared.insert(name.clone()) {
                return Err(FrontendError::DuplicateDeclaration { name, line, col });
            }
            let init = if self.at_punct("=") {
                self.bump();
                let neg = if self.at_punct("-") {
                    self.bump();
                    true
                } else {
                    false
                };
                match self.bump().tok {
                    Tok::Int(v) => Some(if neg { -v } else { v }),
                    other => return self.err(format!("expected integer initialiser, found {}", describe(&other))),
                }
            } else {
                None
            };
            self.expect_punct(";")?;
            shared.push(SharedDecl { name, init });
        }
        let mut threads: Vec<Thread> = Vec::new();
        while self.at_kw("thread") {
            self.bump();
            let (name, line, col) = self.ident()?;
            if threads.iter().any(|t| t.name == name) {
                return Err(FrontendError::DuplicateDeclaration { name, line, col });
            }
            self.locals.clear();
            self.in_thread = true;
            let body = self.block()?;
            self.in_thread = false;
            let idx = threads.len();
            let mut names: Vec<String> = self.locals.drain().collect();
            names.sort();
            self.all_locals.extend(names.into_iter().map(|n| (idx, n)));
            threads.push(Thread { name, body });
        }
        if threads.is_empty() {
            return self.err("expected at least one `thread` block");
        }
        let final_assert = if self.at_kw("assert") {
            self.bump();
            self.expect_punct("(")?;
            let e = self.expr()?;
            self.expect_punct(")")?;
            self.expect_punct(";")?;
            Some(e)
        } else {
            None
        };
        if self.peek().tok != Tok::Eof {
            return self.err(format!("unexpected {} after program end", describe(&self.peek().tok)));
        }
        Ok(Ast { shared, threads, final_assert })
    }

    fn block(&mut self) -> Result<Vec<Stmt>, FrontendError> {
        self.expect_punct("{")?;
        let mut stmts = Vec::new();
        while !self.at_punct("}") {
            if self.peek().tok == Tok::Eof {
                return self.err("unterminated block");
            }
            stmts.push(self.stmt()?);
        }
        self.bump();
        Ok(stmts)
    }

    fn stmt(&mut self) -> Result<Stmt, FrontendError> {
        if self.at_kw("local") {
            self.bump();
            let (name, line, col) = self.ident()?;
            if self.shared.contains(&name) || !self.locals.insert(name.clone()) {
                return Err(FrontendError::DuplicateDeclaration { name, line, col });
            }
            self.expect_punct(";")?;
            return Ok(Stmt::Local(name));
        }
        if self.at_kw("fence") {
            self.bump();
            self.expect_punct(";")?;
            return Ok(Stmt::Fence);
        }
        if self.at_kw("assert") || self.at_kw("assume") {
            let is_assert = self.at_kw("assert");
            self.bump();
            self.expect_punct("(")?;
            let e = self.expr()?;
            self.expect_punct(")")?;
            self.expect_punct(";")?;
            return Ok(if is_assert { Stmt::Assert(e) } else { Stmt::Assume(e) });
        }
        if self.at_kw("if") {
            self.bump();
            self.expect_punct("(")?;
            let c = self.expr()?;
            self.expect_punct(")")?;
            let then = self.block()?;
            let els = if self.at_kw("else") {
                self.bump();
                if self.at_kw("if") {
                    vec![self.stmt()?]
                } else {
                    self.block()?
                }
            } else {
                Vec::new()
            };
            return Ok(Stmt::If(c, then, els));
        }
        if self.at_kw("while") {
            self.bump();
            self.expect_punct("(")?;
            let c = self.expr()?;
            self.expect_punct(")")?;
            let body = self.block()?;
            return Ok(Stmt::While(c, body));
        }
        let (name, line, col) = self.ident()?;
        self.check_declared(&name, line, col)?;
        self.expect_punct("=")?;
        let e = self.expr()?;
        self.expect_punct(";")?;
        Ok(Stmt::Assign(name, e))
    }

    fn check_declared(&self, name: &str, line: usize, col: usize) -> Result<(), FrontendError> {
        if self.shared.contains(name) {
            return Ok(());
        }
        if self.in_thread {
            if self.locals.contains(name) {
                return Ok(());
            }
        } else {
            let owners = self.all_locals.iter().filter(|(_, n)| n == name).count();
            if owners == 1 {
                return Ok(());
            }
            if owners > 1 {
                return Err(FrontendError::AmbiguousIdentifier { name: name.to_string(), line, col });
            }
        }
        Err(FrontendError::UndeclaredIdentifier { name: name.to_string(), line, col })
    }

    fn expr(&mut self) -> Result<Expr, FrontendError> {
        self.binary(1)
    }

    fn binop(&self) -> Option<(BinOp, u8)> {
        let p = match &self.peek().tok {
            Tok::Punct(p) => *p,
            _ => return None,
        };
        Some(match p {
            "||" => (BinOp::Or, 1),
            "&&" => (BinOp::And, 2),
            "==" => (BinOp::Eq, 3),
            "!=" => (BinOp::Ne, 3),
            "<" => (BinOp::Lt, 4),
            "<=" => (BinOp::Le, 4),
            ">" => (BinOp::Gt, 4),
            ">=" => (BinOp::Ge, 4),
            "+" => (BinOp::Add, 5),
            "-" => (BinOp::Sub, 5),
            "*" => (BinOp::Mul, 6),
            _ => return None,
        })
    }

    fn binary(&mut self, min: u8) -> Result<Expr, FrontendError> {
        let mut lhs = self.unary()?;
        while let Some((op, p)) = self.binop() {
            if p < min {
                break;
            }
            self.bump();
            let rhs = self.binary(p + 1)?;
            lhs = Expr::bin(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, FrontendError> {
        if self.at_punct("!") {
            self.bump();
            return Ok(Expr::Unary(UnOp::Not, Box::new(self.unary()?)));
        }
        if self.at_punct("-") {
            self.bump();
            return Ok(Expr::Unary(UnOp::Neg, Box::new(self.unary()?)));
        }
        if self.at_punct("(") {
            self.bump();
            let e = self.expr()?;
            self.expect_punct(")")?;
            return Ok(e);
        }
        let t = self.peek().clone();
        match t.tok {
            Tok::Int(v) => {
                self.bump();
                Ok(Expr::Int(v))
            }
            Tok::Ident(_) => {
                let (name, line, col) = self.ident()?;
                self.check_declared(&name, line, col)?;
                Ok(Expr::Ident(name))
            }
            other => self.err(format!("expected expression, found {}", describe(&other))),
        }
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Int(v) => format!("`{v}`"),
        Tok::Punct(p) => format!("`{p}`"),
        Tok::Eof => "end of input".to_string(),
    }
}
