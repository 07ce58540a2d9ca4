//! The textual LP format: `Minimize`/`Maximize`, `Subject To`, `Bounds`, `End`.
//!
//! Export lists every variable in `Bounds`, in declaration order, so parsing
//! an exported file restores the original variable order.

use std::collections::HashMap;
use std::fmt::Write as _;

use super::{Constraint, LpError, LpProblem, Relation, Sense};

const RESERVED: &[&str] = &[
    "inf", "infinity", "free", "end", "bounds", "bound", "st", "subject", "to", "minimize", "maximize", "min", "max",
    "general", "generals", "binary", "binaries",
];
const TERMS_PER_LINE: usize = 8;

fn valid_name(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !RESERVED.contains(&name.to_ascii_lowercase().as_str())
}

fn number(x: f64) -> String {
    if x == f64::INFINITY {
        "+inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{x}")
    }
}

fn write_terms(out: &mut String, problem: &LpProblem, terms: &[(usize, f64)]) {
    for (k, &(j, a)) in terms.iter().enumerate() {
        if k > 0 && k % TERMS_PER_LINE == 0 {
            out.push_str("\n   ");
        }
        let sign = if a.is_sign_negative() { "-" } else { "+" };
        if k == 0 && sign == "+" {
            let _ = write!(out, " {} {}", number(a), problem.variables[j].name);
        } else {
            let _ = write!(out, " {sign} {} {}", number(a.abs()), problem.variables[j].name);
        }
    }
}

pub fn export_lp_format(problem: &LpProblem) -> Result<String, LpError> {
    problem.check()?;
    for name in problem
        .variables
        .iter()
        .map(|v| &v.name)
        .chain(problem.constraints.iter().map(|c| &c.name))
    {
        if !valid_name(name) {
            return Err(LpError::UnsupportedName(name.clone()));
        }
    }
    let mut out = String::new();
    out.push_str(match problem.sense {
        Sense::Minimize => "Minimize\n",
        Sense::Maximize => "Maximize\n",
    });
    out.push_str(" obj:");
    write_terms(&mut out, problem, &problem.objective);
    out.push_str("\nSubject To\n");
    for c in &problem.constraints {
        let _ = write!(out, " {}:", c.name);
        write_terms(&mut out, problem, &c.coeffs);
        let _ = writeln!(out, " {} {}", c.relation.symbol(), number(c.rhs));
    }
    out.push_str("Bounds\n");
    for v in &problem.variables {
        let line = match (v.lower.is_finite(), v.upper.is_finite()) {
            (false, false) => format!(" {} free", v.name),
            (true, false) => format!(" {} >= {}", v.name, number(v.lower)),
            _ if v.lower == v.upper => format!(" {} = {}", v.name, number(v.lower)),
            _ => format!(" {} <= {} <= {}", number(v.lower), v.name, number(v.upper)),
        };
        out.push_str(&line);
        out.push('\n');
    }
    out.push_str("End\n");
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Name(String),
    Num(f64),
    Colon,
    Rel(Relation),
    Plus,
    Minus,
}

fn tokenize(line: &str, lineno: usize) -> Result<Vec<Token>, LpError> {
    let err = |m: String| LpError::Parse {
        line: lineno,
        message: m,
    };
    let chars: Vec<char> = line.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            _ if c.is_whitespace() => i += 1,
            ':' => {
                out.push(Token::Colon);
                i += 1;
            }
            '+' => {
                out.push(Token::Plus);
                i += 1;
            }
            '-' => {
                out.push(Token::Minus);
                i += 1;
            }
            '<' | '>' | '=' => {
                let mut op = String::from(c);
                if i + 1 < chars.len() && matches!(chars[i + 1], '<' | '>' | '=') {
                    op.push(chars[i + 1]);
                }
                i += op.len();
                let rel = match op.as_str() {
                    "<=" | "=<" | "<" => Relation::Le,
                    ">=" | "=>" | ">" => Relation::Ge,
                    "=" | "==" => Relation::Eq,
                    other => return Err(err(format!("unknown operator {other:?}"))),
                };
                out.push(Token::Rel(rel));
            }
            _ if c.is_ascii_digit() || c == '.' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                if i < chars.len() && matches!(chars[i], 'e' | 'E') {
                    let mut k = i + 1;
                    if k < chars.len() && matches!(chars[k], '+' | '-') {
                        k += 1;
                    }
                    if k < chars.len() && chars[k].is_ascii_digit() {
                        i = k;
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text: String = chars[start..i].iter().collect();
                let v = text.parse().map_err(|_| err(format!("bad number {text:?}")))?;
                out.push(Token::Num(v));
            }
            _ => {
                let start = i;
                while i < chars.len()
                    && !chars[i].is_whitespace()
                    && !matches!(chars[i], ':' | '<' | '>' | '=' | '+' | '-')
                {
                    i += 1;
                }
                let text: String = chars[start..i].iter().collect();
                match text.to_ascii_lowercase().as_str() {
                    "inf" | "infinity" => out.push(Token::Num(f64::INFINITY)),
                    _ => out.push(Token::Name(text)),
                }
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    Start,
    Objective,
    Constraints,
    Bounds,
    End,
}

fn section_header(line: &str) -> Option<(Section, Option<Sense>)> {
    let lower = line.trim().to_ascii_lowercase();
    let words: Vec<&str> = lower.split_whitespace().collect();
    match words.as_slice() {
        ["minimize" | "minimise" | "minimum" | "min"] => Some((Section::Objective, Some(Sense::Minimize))),
        ["maximize" | "maximise" | "maximum" | "max"] => Some((Section::Objective, Some(Sense::Maximize))),
        ["subject", "to"] | ["such", "that"] | ["st"] | ["s.t."] => Some((Section::Constraints, None)),
        ["bounds"] | ["bound"] => Some((Section::Bounds, None)),
        ["end"] => Some((Section::End, None)),
        _ => None,
    }
}

struct Builder {
    problem: LpProblem,
    index: HashMap<String, usize>,
    in_bounds: Vec<bool>,
    bounds_order: Vec<usize>,
}

impl Builder {
    fn var(&mut self, name: &str) -> usize {
        if let Some(&j) = self.index.get(name) {
            return j;
        }
        let j = self.problem.add_variable(name, 0.0, f64::INFINITY);
        self.index.insert(name.to_string(), j);
        self.in_bounds.push(false);
        j
    }

    fn bounded(&mut self, name: &str) -> usize {
        let j = self.var(name);
        if !self.in_bounds[j] {
            self.in_bounds[j] = true;
            self.bounds_order.push(j);
        }
        j
    }

    /// Variables named in `Bounds` come first, in that order.
    fn finish(self) -> LpProblem {
        let mut order = self.bounds_order;
        order.extend((0..self.in_bounds.len()).filter(|&j| !self.in_bounds[j]));
        let mut new_index = vec![0; order.len()];
        for (new, &old) in order.iter().enumerate() {
            new_index[old] = new;
        }
        let mut p = self.problem;
        let remap = |terms: &mut Vec<(usize, f64)>| terms.iter_mut().for_each(|t| t.0 = new_index[t.0]);
        remap(&mut p.objective);
        p.constraints.iter_mut().for_each(|c| remap(&mut c.coeffs));
        let old = std::mem::take(&mut p.variables);
        p.variables = order.iter().map(|&j| old[j].clone()).collect();
        p
    }
}

/// Label, terms and the index of the first unread token.
type ParsedTerms = (Option<String>, Vec<(usize, f64)>, usize);

/// Parses `[label:] term term ...` up to an optional relation; returns the
/// label, terms and the remaining tokens.
fn parse_terms(b: &mut Builder, tokens: &[Token], lineno: usize) -> Result<ParsedTerms, LpError> {
    let err = |m: &str| LpError::Parse {
        line: lineno,
        message: m.to_string(),
    };
    let mut pos = 0;
    let mut label = None;
    if let [Token::Name(n), Token::Colon, ..] = tokens {
        label = Some(n.clone());
        pos = 2;
    }
    let mut terms: Vec<(usize, f64)> = Vec::new();
    while pos < tokens.len() {
        if matches!(tokens[pos], Token::Rel(_)) {
            break;
        }
        let mut sign = 1.0;
        while let Some(t @ (Token::Plus | Token::Minus)) = tokens.get(pos) {
            if *t == Token::Minus {
                sign = -sign;
            }
            pos += 1;
        }
        let mut coef = 1.0;
        if let Some(Token::Num(v)) = tokens.get(pos) {
            coef = *v;
            pos += 1;
        }
        match tokens.get(pos) {
            Some(Token::Name(n)) => {
                let j = b.var(n);
                let c = sign * coef;
                match terms.iter_mut().find(|(k, _)| *k == j) {
                    Some(t) => t.1 += c,
                    None => terms.push((j, c)),
                }
                pos += 1;
            }
            _ => return Err(err("expected a variable name")),
        }
    }
    Ok((label, terms, pos))
}

fn signed_number(tokens: &[Token], lineno: usize) -> Result<(f64, usize), LpError> {
    let mut sign = 1.0;
    let mut pos = 0;
    while let Some(t @ (Token::Plus | Token::Minus)) = tokens.get(pos) {
        if *t == Token::Minus {
            sign = -sign;
        }
        pos += 1;
    }
    match tokens.get(pos) {
        Some(Token::Num(v)) => Ok((sign * v, pos + 1)),
        _ => Err(LpError::Parse {
            line: lineno,
            message: "expected a number".into(),
        }),
    }
}

fn parse_bound(b: &mut Builder, tokens: &[Token], lineno: usize) -> Result<(), LpError> {
    let err = |m: &str| LpError::Parse {
        line: lineno,
        message: m.to_string(),
    };
    let set = |b: &mut Builder, name: &str, lower: Option<f64>, upper: Option<f64>| {
        let j = b.bounded(name);
        if let Some(l) = lower {
            b.problem.variables[j].lower = l;
        }
        if let Some(u) = upper {
            b.problem.variables[j].upper = u;
        }
    };
    match tokens {
        [Token::Name(n), Token::Name(f)] if f.eq_ignore_ascii_case("free") => {
            set(b, n, Some(f64::NEG_INFINITY), Some(f64::INFINITY));
            return Ok(());
        }
        [Token::Name(n), Token::Rel(rel), rest @ ..] => {
            let (v, used) = signed_number(rest, lineno)?;
            if used != rest.len() {
                return Err(err("trailing tokens in bound"));
            }
            match rel {
                Relation::Ge => set(b, n, Some(v), None),
                Relation::Le => set(b, n, None, Some(v)),
                Relation::Eq => set(b, n, Some(v), Some(v)),
            }
            return Ok(());
        }
        _ => {}
    }
    let (v, used) = signed_number(tokens, lineno)?;
    match &tokens[used..] {
        [Token::Rel(r1), Token::Name(n), rest @ ..] => {
            let (lower, upper) = match r1 {
                Relation::Le => (Some(v), None),
                Relation::Ge => (None, Some(v)),
                Relation::Eq => (Some(v), Some(v)),
            };
            let name = n.clone();
            set(b, &name, lower, upper);
            if let [Token::Rel(r2), tail @ ..] = rest {
                let (w, used) = signed_number(tail, lineno)?;
                if used != tail.len() {
                    return Err(err("trailing tokens in bound"));
                }
                match r2 {
                    Relation::Le => set(b, &name, None, Some(w)),
                    Relation::Ge => set(b, &name, Some(w), None),
                    Relation::Eq => set(b, &name, Some(w), Some(w)),
                }
            } else if !rest.is_empty() {
                return Err(err("trailing tokens in bound"));
            }
            Ok(())
        }
        _ => Err(err("unrecognized bound")),
    }
}

pub fn parse_lp_format(text: &str) -> Result<LpProblem, LpError> {
    let mut b = Builder {
        problem: LpProblem::new(Sense::Minimize),
        index: HashMap::new(),
        in_bounds: Vec::new(),
        bounds_order: Vec::new(),
    };
    let mut section = Section::Start;
    // statements in the objective and constraint sections may span lines
    let mut pending: Vec<Token> = Vec::new();
    let mut pending_line = 0;
    let mut objective_done = false;

    let flush_objective = |b: &mut Builder, pending: &mut Vec<Token>, line: usize| -> Result<(), LpError> {
        let (_, terms, used) = parse_terms(b, pending, line)?;
        if used != pending.len() {
            return Err(LpError::Parse {
                line,
                message: "relation in objective".into(),
            });
        }
        b.problem.objective = terms;
        pending.clear();
        Ok(())
    };

    for (k, raw) in text.lines().enumerate() {
        let lineno = k + 1;
        let line = raw.split('\\').next().unwrap_or("");
        if line.trim().is_empty() {
            continue;
        }
        if let Some((next, sense)) = section_header(line) {
            if section == Section::Start && next != Section::Objective {
                return Err(LpError::Parse {
                    line: lineno,
                    message: "missing objective section".into(),
                });
            }
            if section == Section::Objective {
                flush_objective(&mut b, &mut pending, pending_line)?;
                objective_done = true;
            }
            if section == Section::Constraints && !pending.is_empty() {
                return Err(LpError::Parse {
                    line: pending_line,
                    message: "unterminated constraint".into(),
                });
            }
            if let Some(s) = sense {
                if objective_done {
                    return Err(LpError::Parse {
                        line: lineno,
                        message: "second objective section".into(),
                    });
                }
                b.problem.sense = s;
            }
            section = next;
            pending_line = lineno;
            continue;
        }
        let tokens = tokenize(line, lineno)?;
        match section {
            Section::Start => {
                return Err(LpError::Parse {
                    line: lineno,
                    message: "content before the objective section".into(),
                })
            }
            Section::End => {
                return Err(LpError::Parse {
                    line: lineno,
                    message: "content after End".into(),
                })
            }
            Section::Objective => pending.extend(tokens),
            Section::Bounds => parse_bound(&mut b, &tokens, lineno)?,
            Section::Constraints => {
                if pending.is_empty() {
                    pending_line = lineno;
                }
                pending.extend(tokens);
                // a statement is complete once a relation and its right-hand side appear
                let Some(rel_pos) = pending.iter().position(|t| matches!(t, Token::Rel(_))) else {
                    continue;
                };
                let Ok((rhs, used)) = signed_number(&pending[rel_pos + 1..], lineno) else {
                    continue;
                };
                if rel_pos + 1 + used != pending.len() {
                    return Err(LpError::Parse {
                        line: lineno,
                        message: "trailing tokens after right-hand side".into(),
                    });
                }
                let (label, terms, used_terms) = parse_terms(&mut b, &pending[..rel_pos], pending_line)?;
                debug_assert_eq!(used_terms, rel_pos);
                let Token::Rel(relation) = pending[rel_pos] else {
                    unreachable!()
                };
                let name = label.unwrap_or_else(|| format!("c{}", b.problem.constraints.len() + 1));
                b.problem.constraints.push(Constraint {
                    name,
                    coeffs: terms,
                    relation,
                    rhs,
                });
                pending.clear();
            }
        }
    }
    if section == Section::Objective {
        flush_objective(&mut b, &mut pending, pending_line)?;
    }
    if !pending.is_empty() {
        return Err(LpError::Parse {
            line: pending_line,
            message: "unterminated constraint".into(),
        });
    }
    if section == Section::Start {
        return Err(LpError::Parse {
            line: 0,
            message: "missing objective section".into(),
        });
    }
    Ok(b.finish())
}
