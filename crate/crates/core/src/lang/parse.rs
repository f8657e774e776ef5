//! Parser for `.anc` sources.
//!
//! ```text
//! var k = 0              # declarations
//! k = READ(0)
//! l_loop: k = DEC(k)     # optional label, optional destination
//! JEZ(k, l_loop)
//! STOP()
//! ```

use std::collections::{HashMap, HashSet};

use crate::error::{AncError, Result};
use crate::isa::Opcode;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarDecl {
    pub name: String,
    pub init: usize,
    pub line: usize,
}

/// A statement argument before name resolution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Arg {
    /// Variable or label reference.
    Name(String),
    Int(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Statement {
    pub label: Option<String>,
    pub dest: Option<String>,
    pub op: Opcode,
    pub args: Vec<Arg>,
    /// 1-based source line.
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SourceProgram {
    pub vars: Vec<VarDecl>,
    pub statements: Vec<Statement>,
}

impl SourceProgram {
    /// Statement index carrying each label.
    pub fn label_targets(&self) -> HashMap<&str, usize> {
        self.statements
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.label.as_deref().map(|l| (l, i)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(usize),
    Colon,
    Eq,
    LParen,
    RParen,
    Comma,
    Semi,
}

fn lex_line(text: &str, line: usize) -> Result<Vec<(Tok, usize)>> {
    let mut out = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c == '#' {
            break;
        }
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let single = match c {
            ':' => Some(Tok::Colon),
            '=' => Some(Tok::Eq),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            ',' => Some(Tok::Comma),
            ';' => Some(Tok::Semi),
            _ => None,
        };
        if let Some(t) = single {
            out.push((t, col));
            i += 1;
        } else if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let s: String = chars[start..i].iter().collect();
            let v = s.parse::<usize>().map_err(|_| AncError::Syntax {
                line,
                col,
                msg: format!("integer literal `{s}` too large"),
            })?;
            out.push((Tok::Int(v), col));
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push((Tok::Ident(chars[start..i].iter().collect()), col));
        } else {
            return Err(AncError::Syntax {
                line,
                col,
                msg: format!("unexpected character `{c}`"),
            });
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    toks: &'a [(Tok, usize)],
    pos: usize,
    line: usize,
    eol_col: usize,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn peek_at(&self, off: usize) -> Option<&Tok> {
        self.toks.get(self.pos + off).map(|(t, _)| t)
    }

    fn col(&self) -> usize {
        self.toks.get(self.pos).map_or(self.eol_col, |(_, c)| *c)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(t, _)| t.clone());
        self.pos += 1;
        t
    }

    fn err(&self, msg: impl Into<String>) -> AncError {
        AncError::Syntax {
            line: self.line,
            col: self.col(),
            msg: msg.into(),
        }
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<()> {
        if self.peek() == Some(&want) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(format!("expected {what}")))
        }
    }

    fn ident(&mut self, what: &str) -> Result<String> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.err(format!("expected {what}"))),
        }
    }

    fn finish(&mut self) -> Result<()> {
        if self.peek() == Some(&Tok::Semi) {
            self.pos += 1;
        }
        if self.pos < self.toks.len() {
            return Err(self.err("unexpected trailing input"));
        }
        Ok(())
    }
}

/// Parse source text into a structured program with all names checked.
pub fn parse(source: &str) -> Result<SourceProgram> {
    let mut prog = SourceProgram::default();
    let mut pending_label: Option<(String, usize)> = None;

    for (idx, raw) in source.lines().enumerate() {
        let line = idx + 1;
        let toks = lex_line(raw, line)?;
        if toks.is_empty() {
            continue;
        }
        let mut cur = Cursor {
            toks: &toks,
            pos: 0,
            line,
            eol_col: raw.chars().count() + 1,
        };

        if cur.peek() == Some(&Tok::Ident("var".into())) && matches!(cur.peek_at(1), Some(Tok::Ident(_))) {
            cur.next();
            let name = cur.ident("variable name")?;
            cur.expect(Tok::Eq, "`=`")?;
            let init = match cur.next() {
                Some(Tok::Int(v)) => v,
                _ => {
                    cur.pos -= 1;
                    return Err(cur.err("expected integer initial value"));
                }
            };
            cur.finish()?;
            prog.vars.push(VarDecl { name, init, line });
            continue;
        }

        let mut label = None;
        if matches!(cur.peek(), Some(Tok::Ident(_))) && cur.peek_at(1) == Some(&Tok::Colon) {
            label = Some(cur.ident("label")?);
            cur.next();
        }
        if cur.pos == toks.len() {
            // label on a line of its own attaches to the next statement
            if let Some((prev, _)) = &pending_label {
                return Err(cur.err(format!("label `{prev}` has no statement")));
            }
            pending_label = label.map(|l| (l, line));
            continue;
        }
        if let Some((l, _)) = pending_label.take() {
            if label.is_some() {
                return Err(cur.err(format!("label `{l}` has no statement")));
            }
            label = Some(l);
        }

        let mut dest = None;
        if matches!(cur.peek(), Some(Tok::Ident(_))) && cur.peek_at(1) == Some(&Tok::Eq) {
            dest = Some(cur.ident("destination")?);
            cur.next();
        }
        let op_col = cur.col();
        let op_name = cur.ident("opcode")?;
        let op: Opcode = op_name.parse().map_err(|_| AncError::UnknownOpcode {
            name: op_name.clone(),
            line,
            col: op_col,
        })?;
        cur.expect(Tok::LParen, "`(`")?;
        let mut args = Vec::new();
        if cur.peek() != Some(&Tok::RParen) {
            loop {
                match cur.next() {
                    Some(Tok::Ident(s)) => args.push(Arg::Name(s)),
                    Some(Tok::Int(v)) => args.push(Arg::Int(v)),
                    _ => {
                        cur.pos -= 1;
                        return Err(cur.err("expected argument"));
                    }
                }
                if cur.peek() == Some(&Tok::Comma) {
                    cur.next();
                } else {
                    break;
                }
            }
        }
        cur.expect(Tok::RParen, "`)`")?;
        cur.finish()?;
        if args.len() != op.arity() {
            return Err(AncError::Arity {
                op: op.mnemonic().into(),
                expected: op.arity(),
                found: args.len(),
                line,
            });
        }
        prog.statements.push(Statement {
            label,
            dest,
            op,
            args,
            line,
        });
    }

    if let Some((l, line)) = pending_label {
        return Err(AncError::Syntax {
            line,
            col: 1,
            msg: format!("label `{l}` has no statement"),
        });
    }
    if prog.statements.is_empty() {
        return Err(AncError::NoStatements);
    }
    check_names(&prog)?;
    Ok(prog)
}

fn check_names(prog: &SourceProgram) -> Result<()> {
    let mut vars: HashMap<&str, usize> = HashMap::new();
    for v in &prog.vars {
        if vars.insert(&v.name, v.line).is_some() {
            return Err(AncError::DuplicateVariable {
                name: v.name.clone(),
                line: v.line,
            });
        }
    }
    let mut labels = HashSet::new();
    for s in &prog.statements {
        if let Some(l) = &s.label {
            if !labels.insert(l.as_str()) {
                return Err(AncError::DuplicateLabel {
                    name: l.clone(),
                    line: s.line,
                });
            }
            if vars.contains_key(l.as_str()) {
                return Err(AncError::DuplicateLabel {
                    name: l.clone(),
                    line: s.line,
                });
            }
        }
    }
    let declared_before = |name: &str, line: usize| vars.get(name).is_some_and(|&d| d < line);
    for s in &prog.statements {
        if let Some(d) = &s.dest {
            if !declared_before(d, s.line) {
                return Err(AncError::Unresolved {
                    name: d.clone(),
                    line: s.line,
                });
            }
        }
        for a in &s.args {
            if let Arg::Name(n) = a {
                if !declared_before(n, s.line) && !labels.contains(n.as_str()) {
                    return Err(AncError::Unresolved {
                        name: n.clone(),
                        line: s.line,
                    });
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const ACCESS: &str = "var k = 0\nk = READ(0)\nk = INC(k)\nk = READ(k)\nWRITE(0, k)\nSTOP()\n";

    #[test]
    fn parses_access_listing() {
        let p = parse(ACCESS).unwrap();
        assert_eq!(p.vars.len(), 1);
        assert_eq!(p.vars[0].name, "k");
        assert_eq!(p.statements.len(), 5);
        assert_eq!(p.statements[0].op, Opcode::Read);
        assert_eq!(p.statements[0].args, vec![Arg::Int(0)]);
        assert_eq!(p.statements[3].dest, None);
    }

    #[test]
    fn empty_source_is_rejected() {
        assert!(matches!(parse(""), Err(AncError::NoStatements)));
        assert!(matches!(parse("# nothing\nvar x = 1\n"), Err(AncError::NoStatements)));
    }

    #[test]
    fn undefined_label_is_unresolved() {
        let err = parse("var x = 0\nJEZ(x, nowhere)\nSTOP()").unwrap_err();
        assert!(matches!(err, AncError::Unresolved { ref name, line: 2 } if name == "nowhere"), "{err}");
    }

    #[test]
    fn duplicate_label() {
        let err = parse("a: STOP()\na: STOP()").unwrap_err();
        assert!(matches!(err, AncError::DuplicateLabel { line: 2, .. }));
    }

    #[test]
    fn unknown_opcode_and_arity() {
        let err = parse("var x = 0\nx = MUL(x, x)").unwrap_err();
        assert!(matches!(err, AncError::UnknownOpcode { line: 2, col: 5, .. }), "{err}");
        let err = parse("var x = 0\nx = INC(x, x)").unwrap_err();
        assert!(matches!(err, AncError::Arity { expected: 1, found: 2, .. }));
    }

    #[test]
    fn syntax_error_reports_position() {
        let err = parse("var x = 0\nx = INC(x").unwrap_err();
        match err {
            AncError::Syntax { line, col, .. } => {
                assert_eq!(line, 2);
                assert_eq!(col, 10);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn variables_must_be_declared_first() {
        let err = parse("x = ZERO()\nvar x = 0\nSTOP()").unwrap_err();
        assert!(matches!(err, AncError::Unresolved { .. }));
    }

    #[test]
    fn accepts_semicolons_comments_and_standalone_labels() {
        let src = "var head = 0;\n# comment\nloop:\n head = READ(head); # trailing\nJEZ(0, loop)\nSTOP()";
        let p = parse(src).unwrap();
        assert_eq!(p.statements[0].label.as_deref(), Some("loop"));
        assert_eq!(p.label_targets()["loop"], 0);
    }

    #[test]
    fn label_without_space() {
        let p = parse("var t = 0\nl_a:t = INC(t)\nSTOP()").unwrap();
        assert_eq!(p.statements[0].label.as_deref(), Some("l_a"));
    }
}
