//! Reading and writing models in the CPLEX LP text format.
//!
//! The writer lists every variable in the `Bounds` section in column order,
//! and the reader numbers variables by their first appearance there, so a
//! written model reads back with identical columns.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use super::model::{MilpModel, Sense, VarKind};
use crate::error::{Error, Result};

const WRAP: usize = 200;

fn fmt_num(x: f64) -> String {
    if x == f64::INFINITY {
        "inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{x}")
    }
}

struct Wrapper<'a> {
    out: &'a mut String,
    line_len: usize,
}

impl Wrapper<'_> {
    fn push(&mut self, piece: &str) {
        if self.line_len + piece.len() + 1 > WRAP && self.line_len > 0 {
            self.out.push_str("\n   ");
            self.line_len = 3;
        }
        self.out.push(' ');
        self.out.push_str(piece);
        self.line_len += piece.len() + 1;
    }
}

fn write_terms(w: &mut Wrapper<'_>, model: &MilpModel, terms: &[(usize, f64)]) {
    for (pos, &(j, a)) in terms.iter().enumerate() {
        let sign = if a < 0.0 || (a == 0.0 && a.is_sign_negative()) { "-" } else { "+" };
        let name = &model.variables[j].name;
        if pos == 0 && sign == "+" {
            w.push(&format!("{} {name}", fmt_num(a.abs())));
        } else {
            w.push(&format!("{sign} {} {name}", fmt_num(a.abs())));
        }
    }
}

pub fn write_lp(model: &MilpModel) -> String {
    let mut out = String::from("Minimize\n obj:");
    {
        let mut w = Wrapper { out: &mut out, line_len: 5 };
        write_terms(&mut w, model, &model.objective);
        let c = model.objective_constant;
        if c != 0.0 {
            let sign = if c < 0.0 { "-" } else { "+" };
            if model.objective.is_empty() && c > 0.0 {
                w.push(&fmt_num(c));
            } else {
                w.push(&format!("{sign} {}", fmt_num(c.abs())));
            }
        }
    }
    out.push_str("\nSubject To\n");
    for row in &model.constraints {
        let _ = write!(out, " {}:", row.name);
        let mut w = Wrapper { out: &mut out, line_len: row.name.len() + 2 };
        if row.terms.is_empty() {
            // Keeps the row; the reader drops the zero term again.
            if let Some(v) = model.variables.first() {
                w.push(&format!("0 {}", v.name));
            }
        } else {
            write_terms(&mut w, model, &row.terms);
        }
        w.push(&format!("{} {}", row.sense.symbol(), fmt_num(row.rhs)));
        out.push('\n');
    }
    out.push_str("Bounds\n");
    for v in &model.variables {
        let _ = writeln!(out, " {} <= {} <= {}", fmt_num(v.lower), v.name, fmt_num(v.upper));
    }
    for (title, kind) in [("Binaries", VarKind::Binary), ("Generals", VarKind::Integer)] {
        let names: Vec<&str> =
            model.variables.iter().filter(|v| v.kind == kind).map(|v| v.name.as_str()).collect();
        if names.is_empty() {
            continue;
        }
        let _ = writeln!(out, "{title}");
        let mut w = Wrapper { out: &mut out, line_len: 0 };
        for n in names {
            w.push(n);
        }
        out.push('\n');
    }
    out.push_str("End\n");
    out
}

pub fn export_lp(model: &MilpModel, path: &Path) -> Result<()> {
    std::fs::write(path, write_lp(model))?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sign(f64),
    Cmp(Sense),
    Colon,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Section {
    None,
    Objective,
    Constraints,
    Bounds,
    Binaries,
    Generals,
    End,
}

fn section_of(line: &str) -> Option<Section> {
    let l = line.trim().to_ascii_lowercase();
    let l = l.as_str();
    Some(match l {
        "minimize" | "minimise" | "minimum" | "min" => Section::Objective,
        "subject to" | "such that" | "st" | "s.t." | "st." => Section::Constraints,
        "bounds" | "bound" => Section::Bounds,
        "binaries" | "binary" | "bin" => Section::Binaries,
        "generals" | "general" | "gen" | "integers" => Section::Generals,
        "end" => Section::End,
        _ => return None,
    })
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || "_!\"#$%&()/,;?@'`{}|~".contains(c)
}

fn is_ident_char(c: char) -> bool {
    is_ident_start(c) || c.is_ascii_digit() || c == '.' || c == '[' || c == ']'
}

fn tokenize(line: &str, lineno: usize) -> Result<Vec<Tok>> {
    let err = |msg: String| Error::LpParse { line: lineno, msg };
    let chars: Vec<char> = line.chars().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c == '\\' {
            break;
        } else if c == ':' {
            toks.push(Tok::Colon);
            i += 1;
        } else if c == '+' || c == '-' {
            toks.push(Tok::Sign(if c == '-' { -1.0 } else { 1.0 }));
            i += 1;
        } else if c == '<' || c == '>' || c == '=' {
            let next = chars.get(i + 1).copied();
            let (sense, len) = match (c, next) {
                ('<', Some('=')) | ('=', Some('<')) => (Sense::Le, 2),
                ('>', Some('=')) | ('=', Some('>')) => (Sense::Ge, 2),
                ('<', _) => (Sense::Le, 1),
                ('>', _) => (Sense::Ge, 1),
                _ => (Sense::Eq, 1),
            };
            toks.push(Tok::Cmp(sense));
            i += len;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() {
                let d = chars[i];
                let exp_sign = (d == '+' || d == '-') && matches!(chars[i - 1], 'e' | 'E');
                if d.is_ascii_digit() || d == '.' || d == 'e' || d == 'E' || exp_sign {
                    i += 1;
                } else {
                    break;
                }
            }
            let text: String = chars[start..i].iter().collect();
            let v = text.parse::<f64>().map_err(|_| err(format!("bad number {text:?}")))?;
            toks.push(Tok::Num(v));
        } else if is_ident_start(c) {
            let start = i;
            while i < chars.len() && is_ident_char(chars[i]) {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            let lower = text.to_ascii_lowercase();
            if lower == "inf" || lower == "infinity" {
                toks.push(Tok::Num(f64::INFINITY));
            } else {
                toks.push(Tok::Ident(text));
            }
        } else {
            return Err(err(format!("unexpected character {c:?}")));
        }
    }
    Ok(toks)
}

struct Builder {
    names: Vec<String>,
    index: HashMap<String, usize>,
    bounds: Vec<(Option<f64>, Option<f64>)>,
    kinds: Vec<VarKind>,
}

impl Builder {
    fn var(&mut self, name: &str) -> usize {
        if let Some(&j) = self.index.get(name) {
            return j;
        }
        self.names.push(name.to_string());
        self.bounds.push((None, None));
        self.kinds.push(VarKind::Continuous);
        self.index.insert(name.to_string(), self.names.len() - 1);
        self.names.len() - 1
    }
}

/// Parses `[+|-] [num] name ...` terms; a bare number is a constant.
/// Returns the terms, the constant and the position after the expression.
fn parse_expr(
    toks: &[(Tok, usize)],
    mut p: usize,
    names: &mut Vec<(String, f64, usize)>,
) -> Result<(f64, usize)> {
    let mut constant = 0.0;
    while p < toks.len() {
        let line = toks[p].1;
        let mut sign = 1.0;
        let mut saw_sign = false;
        while let Some((Tok::Sign(s), _)) = toks.get(p) {
            sign *= s;
            saw_sign = true;
            p += 1;
        }
        let coef = match toks.get(p) {
            Some((Tok::Num(v), _)) => {
                p += 1;
                Some(*v)
            }
            _ => None,
        };
        match toks.get(p) {
            Some((Tok::Ident(n), l)) => {
                names.push((n.clone(), sign * coef.unwrap_or(1.0), *l));
                p += 1;
            }
            _ => match coef {
                Some(v) => constant += sign * v,
                None if saw_sign => {
                    return Err(Error::LpParse { line, msg: "sign without a term".into() })
                }
                None => break,
            },
        }
    }
    Ok((constant, p))
}

pub fn parse_lp(text: &str) -> Result<MilpModel> {
    let mut section = Section::None;
    let mut chunks: Vec<(Section, Vec<(Tok, usize)>)> = Vec::new();
    let mut bound_lines: Vec<(Vec<Tok>, usize)> = Vec::new();
    let mut saw_end = false;
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        if let Some(s) = section_of(raw) {
            if s == Section::End {
                saw_end = true;
                break;
            }
            if s == Section::Objective && section != Section::None {
                return Err(Error::LpParse { line: lineno, msg: "objective must come first".into() });
            }
            section = s;
            chunks.push((s, Vec::new()));
            continue;
        }
        let toks = tokenize(raw, lineno)?;
        if toks.is_empty() {
            continue;
        }
        if section == Section::None {
            return Err(Error::LpParse { line: lineno, msg: "content before Minimize".into() });
        }
        if section == Section::Bounds {
            bound_lines.push((toks.clone(), lineno));
        }
        let chunk = chunks.last_mut().expect("section opened");
        chunk.1.extend(toks.into_iter().map(|t| (t, lineno)));
    }
    if !saw_end {
        let last = text.lines().count();
        return Err(Error::LpParse { line: last, msg: "missing End".into() });
    }

    let mut b = Builder {
        names: Vec::new(),
        index: HashMap::new(),
        bounds: Vec::new(),
        kinds: Vec::new(),
    };
    // Column order follows the Bounds section.
    for (toks, _) in &bound_lines {
        for t in toks {
            if let Tok::Ident(n) = t {
                if !n.eq_ignore_ascii_case("free") {
                    b.var(n);
                }
            }
        }
    }

    let mut model = MilpModel::default();
    for (sec, toks) in &chunks {
        match sec {
            Section::Objective => {
                let mut p = 0;
                if let (Some((Tok::Ident(_), _)), Some((Tok::Colon, _))) = (toks.first(), toks.get(1)) {
                    p = 2;
                }
                let mut terms = Vec::new();
                let (c, end) = parse_expr(toks, p, &mut terms)?;
                if end != toks.len() {
                    return Err(Error::LpParse { line: toks[end].1, msg: "unexpected token in objective".into() });
                }
                model.objective_constant = c;
                for (n, a, _) in terms {
                    let j = b.var(&n);
                    model.objective.push((j, a));
                }
            }
            Section::Constraints => {
                let mut p = 0;
                while p < toks.len() {
                    let line = toks[p].1;
                    let name = match (toks.get(p), toks.get(p + 1)) {
                        (Some((Tok::Ident(n), _)), Some((Tok::Colon, _))) => {
                            p += 2;
                            n.clone()
                        }
                        _ => format!("c{}", model.constraints.len() + 1),
                    };
                    let mut terms = Vec::new();
                    let (lhs_const, q) = parse_expr(toks, p, &mut terms)?;
                    p = q;
                    let sense = match toks.get(p) {
                        Some((Tok::Cmp(s), _)) => *s,
                        _ => return Err(Error::LpParse { line, msg: format!("row {name} has no sense") }),
                    };
                    p += 1;
                    let mut sign = 1.0;
                    while let Some((Tok::Sign(s), _)) = toks.get(p) {
                        sign *= s;
                        p += 1;
                    }
                    let rhs = match toks.get(p) {
                        Some((Tok::Num(v), _)) => sign * v,
                        _ => return Err(Error::LpParse { line, msg: format!("row {name} has no right-hand side") }),
                    };
                    p += 1;
                    let terms: Vec<(usize, f64)> = terms
                        .into_iter()
                        .filter(|t| t.1 != 0.0)
                        .map(|(n, a, _)| (b.var(&n), a))
                        .collect();
                    model.constraints.push(super::model::Constraint {
                        name,
                        terms,
                        sense,
                        rhs: rhs - lhs_const,
                    });
                }
            }
            Section::Bounds => {}
            Section::Binaries | Section::Generals => {
                for (t, line) in toks {
                    match t {
                        Tok::Ident(n) => {
                            let j = b.var(n);
                            b.kinds[j] = if *sec == Section::Binaries { VarKind::Binary } else { VarKind::Integer };
                        }
                        _ => return Err(Error::LpParse { line: *line, msg: "expected a variable name".into() }),
                    }
                }
            }
            Section::None | Section::End => {}
        }
    }

    for (toks, line) in &bound_lines {
        apply_bound(&mut b, toks, *line)?;
    }

    for j in 0..b.names.len() {
        let (lo, hi) = b.bounds[j];
        let kind = b.kinds[j];
        let (dlo, dhi) = if kind == VarKind::Binary { (0.0, 1.0) } else { (0.0, f64::INFINITY) };
        model.add_var(b.names[j].clone(), kind, lo.unwrap_or(dlo), hi.unwrap_or(dhi));
    }
    Ok(model)
}

fn signed_num(toks: &[Tok], p: &mut usize) -> Option<f64> {
    let mut sign = 1.0;
    while let Some(Tok::Sign(s)) = toks.get(*p) {
        sign *= s;
        *p += 1;
    }
    match toks.get(*p) {
        Some(Tok::Num(v)) => {
            *p += 1;
            Some(sign * v)
        }
        _ => None,
    }
}

fn apply_bound(b: &mut Builder, toks: &[Tok], line: usize) -> Result<()> {
    let err = |msg: &str| Error::LpParse { line, msg: msg.to_string() };
    if let [Tok::Ident(n), Tok::Ident(f)] = toks {
        if f.eq_ignore_ascii_case("free") {
            let j = b.var(n);
            b.bounds[j] = (Some(f64::NEG_INFINITY), Some(f64::INFINITY));
            return Ok(());
        }
    }
    let mut p = 0;
    let lead = signed_num(toks, &mut p);
    let first_cmp = match toks.get(p) {
        Some(Tok::Cmp(s)) if lead.is_some() => {
            p += 1;
            Some(*s)
        }
        _ if lead.is_some() => return Err(err("expected a comparison after the bound")),
        _ => None,
    };
    let name = match toks.get(p) {
        Some(Tok::Ident(n)) => n.clone(),
        _ => return Err(err("expected a variable in bound")),
    };
    p += 1;
    let j = b.var(&name);
    if let (Some(v), Some(s)) = (lead, first_cmp) {
        // `v <= x` reads as a lower bound, `v >= x` as an upper one.
        match s {
            Sense::Le => b.bounds[j].0 = Some(v),
            Sense::Ge => b.bounds[j].1 = Some(v),
            Sense::Eq => b.bounds[j] = (Some(v), Some(v)),
        }
    }
    if p < toks.len() {
        let s = match toks.get(p) {
            Some(Tok::Cmp(s)) => *s,
            _ => return Err(err("expected a comparison")),
        };
        p += 1;
        let v = signed_num(toks, &mut p).ok_or_else(|| err("expected a number"))?;
        match s {
            Sense::Le => b.bounds[j].1 = Some(v),
            Sense::Ge => b.bounds[j].0 = Some(v),
            Sense::Eq => b.bounds[j] = (Some(v), Some(v)),
        }
    }
    if p != toks.len() {
        return Err(err("trailing tokens in bound"));
    }
    Ok(())
}
