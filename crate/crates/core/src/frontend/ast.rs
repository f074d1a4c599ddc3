use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnOp {
    Not,
    Neg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Int(i64),
    Ident(String),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn ident(name: &str) -> Expr {
        Expr::Ident(name.to_string())
    }

    pub fn bin(op: BinOp, l: Expr, r: Expr) -> Expr {
        Expr::Binary(op, Box::new(l), Box::new(r))
    }

    pub fn not(e: Expr) -> Expr {
        Expr::Unary(UnOp::Not, Box::new(e))
    }

    /// Identifiers in left-to-right evaluation order, with repetitions.
    pub fn idents(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_idents(&mut out);
        out
    }

    fn collect_idents<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Expr::Int(_) => {}
            Expr::Ident(n) => out.push(n),
            Expr::Unary(_, e) => e.collect_idents(out),
            Expr::Binary(_, l, r) => {
                l.collect_idents(out);
                r.collect_idents(out);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Stmt {
    /// `local r;` declares a thread-local variable, zero at thread start.
    Local(String),
    Assign(String, Expr),
    If(Expr, Vec<Stmt>, Vec<Stmt>),
    While(Expr, Vec<Stmt>),
    Fence,
    Assert(Expr),
    /// Blocks every execution in which the condition is false. Produced
    /// by loop unrolling.
    Assume(Expr),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Thread {
    pub name: String,
    pub body: Vec<Stmt>,
}

impl Thread {
    /// Declared locals in declaration order.
    pub fn locals(&self) -> Vec<&str> {
        fn walk<'a>(stmts: &'a [Stmt], out: &mut Vec<&'a str>) {
            for s in stmts {
                match s {
                    Stmt::Local(n) if !out.contains(&n.as_str()) => out.push(n),
                    Stmt::If(_, t, e) => {
                        walk(t, out);
                        walk(e, out);
                    }
                    Stmt::While(_, b) => walk(b, out),
                    _ => {}
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.body, &mut out);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SharedDecl {
    pub name: String,
    pub init: Option<i64>,
}

/// A parsed program. A top-level `assert` is kept in `final_assert`; later
/// stages run it as a dedicated checker thread that starts once every
/// other thread has finished and drained its writes.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Ast {
    pub shared: Vec<SharedDecl>,
    pub threads: Vec<Thread>,
    pub final_assert: Option<Expr>,
}

impl Ast {
    pub fn shared_index(&self, name: &str) -> Option<usize> {
        self.shared.iter().position(|d| d.name == name)
    }

    pub fn is_shared(&self, name: &str) -> bool {
        self.shared_index(name).is_some()
    }

    pub fn is_loop_free(&self) -> bool {
        fn free(stmts: &[Stmt]) -> bool {
            stmts.iter().all(|s| match s {
                Stmt::While(..) => false,
                Stmt::If(_, t, e) => free(t) && free(e),
                _ => true,
            })
        }
        self.threads.iter().all(|t| free(&t.body))
    }

    /// Thread owning a local referenced from the top-level assert.
    pub fn local_owner(&self, name: &str) -> Option<usize> {
        self.threads.iter().position(|t| t.locals().contains(&name))
    }
}

fn prec(op: BinOp) -> u8 {
    match op {
        BinOp::Or => 1,
        BinOp::And => 2,
        BinOp::Eq | BinOp::Ne => 3,
        BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 4,
        BinOp::Add | BinOp::Sub => 5,
        BinOp::Mul => 6,
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Int(v) => write!(f, "{v}"),
            Expr::Ident(n) => f.write_str(n),
            Expr::Unary(UnOp::Not, e) => write!(f, "!{}", Paren(e)),
            Expr::Unary(UnOp::Neg, e) => write!(f, "-{}", Paren(e)),
            Expr::Binary(op, l, r) => {
                // left-associative: parenthesise a right operand of equal precedence
                let lp = matches!(**l, Expr::Binary(o, ..) if prec(o) < prec(*op));
                let rp = matches!(**r, Expr::Binary(o, ..) if prec(o) <= prec(*op));
                if lp {
                    write!(f, "({l})")?;
                } else {
                    write!(f, "{l}")?;
                }
                write!(f, " {} ", op.symbol())?;
                if rp {
                    write!(f, "({r})")
                } else {
                    write!(f, "{r}")
                }
            }
        }
    }
}

struct Paren<'a>(&'a Expr);

impl fmt::Display for Paren<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Expr::Binary(..) => write!(f, "({})", self.0),
            e => write!(f, "{e}"),
        }
    }
}

fn write_block(f: &mut fmt::Formatter<'_>, stmts: &[Stmt], indent: usize) -> fmt::Result {
    for s in stmts {
        write_stmt(f, s, indent)?;
    }
    Ok(())
}

fn write_stmt(f: &mut fmt::Formatter<'_>, s: &Stmt, indent: usize) -> fmt::Result {
    let pad = "    ".repeat(indent);
    match s {
        Stmt::Local(n) => writeln!(f, "{pad}local {n};"),
        Stmt::Assign(n, e) => writeln!(f, "{pad}{n} = {e};"),
        Stmt::Fence => writeln!(f, "{pad}fence;"),
        Stmt::Assert(e) => writeln!(f, "{pad}assert({e});"),
        Stmt::Assume(e) => writeln!(f, "{pad}assume({e});"),
        Stmt::While(c, b) => {
            writeln!(f, "{pad}while ({c}) {{")?;
            write_block(f, b, indent + 1)?;
            writeln!(f, "{pad}}}")
        }
        Stmt::If(c, t, e) => {
            writeln!(f, "{pad}if ({c}) {{")?;
            write_block(f, t, indent + 1)?;
            if e.is_empty() {
                writeln!(f, "{pad}}}")
            } else {
                writeln!(f, "{pad}}} else {{")?;
                write_block(f, e, indent + 1)?;
                writeln!(f, "{pad}}}")
            }
        }
    }
}

impl fmt::Display for Ast {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for d in &self.shared {
            match d.init {
                Some(v) => writeln!(f, "var {} = {v};", d.name)?,
                None => writeln!(f, "var {};", d.name)?,
            }
        }
        for t in &self.threads {
            writeln!(f, "thread {} {{", t.name)?;
            write_block(f, &t.body, 1)?;
            writeln!(f, "}}")?;
        }
        if let Some(a) = &self.final_assert {
            writeln!(f, "assert({a});")?;
        }
        Ok(())
    }
}
