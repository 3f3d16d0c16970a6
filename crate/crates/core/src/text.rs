//! Plain-text formats.
//!
//! Automorphisms are written one generator per line, `a -> a b`, with an
//! optional second block after a line `inverse:`. Inverse letters may be
//! uppercase or `a^-1`. Graph maps add `vertices:`, `edge a: 1 -> 2` and
//! `map a -> ...` lines, optionally `stratum: a b`. `#` starts a comment.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::free_group::{Automorphism, Letter, Word};
use crate::marked_graph::{EdgePath, GraphMap, MarkedGraph};
use crate::substitution::Substitution;

/// A parsed map file. Rose files also carry the automorphism.
#[derive(Clone, Debug)]
pub struct MapFile {
    pub map: GraphMap,
    pub inverse: Option<GraphMap>,
    pub automorphism: Option<Automorphism>,
}

fn err(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

fn is_name(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_lowercase())
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

/// A token with its 1-based column.
fn tokens(s: &str, offset: usize) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in s.char_indices().chain(std::iter::once((s.len(), ' '))) {
        if c.is_whitespace() {
            if let Some(b) = start.take() {
                out.push((offset + b + 1, &s[b..i]));
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    out
}

/// Lines with comments stripped, keeping 1-based numbers.
fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("");
        (!l.trim().is_empty()).then_some((i + 1, l))
    })
}

/// Splits `lhs -> rhs`, returning the rhs with its column offset.
fn arrow(no: usize, line: &str) -> Result<(&str, &str, usize)> {
    let Some(pos) = line.find("->") else {
        return Err(err(no, 1, "expected `->`"));
    };
    Ok((&line[..pos], &line[pos + 2..], pos + 2))
}

fn letter(names: &HashMap<String, usize>, no: usize, col: usize, tok: &str) -> Result<Letter> {
    let (base, inv) = if let Some(b) = tok.strip_suffix("^-1") {
        (b.to_string(), true)
    } else if is_name(tok) {
        (tok.to_string(), false)
    } else if is_name(&tok.to_lowercase()) && tok.chars().any(|c| c.is_ascii_uppercase()) {
        (tok.to_lowercase(), true)
    } else {
        return Err(err(no, col, format!("bad letter `{tok}`")));
    };
    match names.get(&base) {
        Some(&i) => Ok(Letter::new(i, inv)),
        None => Err(err(no, col, format!("unknown generator `{base}`"))),
    }
}

fn word(names: &HashMap<String, usize>, no: usize, rhs: &str, offset: usize) -> Result<Vec<Letter>> {
    let toks = tokens(rhs, offset);
    if toks.is_empty() {
        return Err(err(no, offset + 1, "empty image"));
    }
    toks.into_iter().map(|(c, t)| letter(names, no, c, t)).collect()
}

struct Rule<'a> {
    no: usize,
    name: String,
    rhs: &'a str,
    offset: usize,
}

fn rule<'a>(no: usize, line: &'a str, prefix: &str) -> Result<Rule<'a>> {
    let (lhs, rhs, offset) = arrow(no, line)?;
    let lhs = lhs.trim();
    let name = lhs.strip_prefix(prefix).unwrap_or(lhs).trim();
    if !is_name(name) {
        return Err(err(no, 1, format!("bad generator name `{name}`")));
    }
    Ok(Rule {
        no,
        name: name.to_string(),
        rhs,
        offset,
    })
}

fn images(rules: &[Rule<'_>], names: &HashMap<String, usize>) -> Result<Vec<EdgePath>> {
    let mut out: Vec<Option<EdgePath>> = vec![None; names.len()];
    for r in rules {
        let Some(&i) = names.get(&r.name) else {
            return Err(err(r.no, 1, format!("unknown generator `{}`", r.name)));
        };
        if out[i].is_some() {
            return Err(err(r.no, 1, format!("duplicate rule for `{}`", r.name)));
        }
        out[i] = Some(word(names, r.no, r.rhs, r.offset)?);
    }
    out.into_iter()
        .enumerate()
        .map(|(i, p)| p.ok_or_else(|| err(0, 0, format!("missing rule for generator {i}"))))
        .collect()
}

/// Parses either format; files without `edge` lines describe a rose.
pub fn parse_map(text: &str) -> Result<MapFile> {
    if lines(text).any(|(_, l)| l.trim_start().starts_with("edge ") || l.trim_start().starts_with("vertices:")) {
        parse_graph_map(text)
    } else {
        parse_automorphism_file(text)
    }
}

pub fn parse_automorphism_file(text: &str) -> Result<MapFile> {
    let mut forward = Vec::new();
    let mut backward = Vec::new();
    let mut in_inverse = false;
    for (no, line) in lines(text) {
        if line.trim() == "inverse:" {
            if in_inverse {
                return Err(err(no, 1, "second `inverse:` block"));
            }
            in_inverse = true;
            continue;
        }
        let r = rule(no, line, "")?;
        if in_inverse {
            backward.push(r);
        } else {
            forward.push(r);
        }
    }
    if forward.is_empty() {
        return Err(err(1, 1, "no rules"));
    }
    let mut names = HashMap::new();
    let mut order = Vec::new();
    for r in &forward {
        if names.insert(r.name.clone(), order.len()).is_some() {
            return Err(err(r.no, 1, format!("duplicate rule for `{}`", r.name)));
        }
        order.push(r.name.clone());
    }
    let fwd = images(&forward, &names)?;
    let words = |imgs: Vec<EdgePath>| imgs.into_iter().map(Word::from_letters).collect::<Vec<_>>();
    let mut phi = Automorphism::new(words(fwd.clone()))?;
    let graph = MarkedGraph::rose(order.len()).with_names(order, vec!["1".into()])?;
    let map = GraphMap::new(graph.clone(), vec![0], fwd)?;
    let inverse = if backward.is_empty() {
        None
    } else {
        let bwd = images(&backward, &names)?;
        phi = phi.with_inverse(words(bwd.clone()))?;
        Some(GraphMap::new(graph, vec![0], bwd)?)
    };
    Ok(MapFile {
        map,
        inverse,
        automorphism: Some(phi),
    })
}

pub fn parse_graph_map(text: &str) -> Result<MapFile> {
    let mut vertices: Option<Vec<String>> = None;
    let mut edges: Vec<(String, usize, usize)> = Vec::new();
    let mut forward = Vec::new();
    let mut backward = Vec::new();
    let mut strata: Vec<(usize, Vec<(usize, &str)>)> = Vec::new();
    let mut in_inverse = false;
    for (no, line) in lines(text) {
        let t = line.trim_start();
        if let Some(rest) = t.strip_prefix("vertices:") {
            let toks: Vec<&str> = rest.split_whitespace().collect();
            vertices = Some(match toks.as_slice() {
                [n] if n.parse::<usize>().is_ok() => {
                    let n: usize = n.parse().expect("checked");
                    if n == 0 {
                        return Err(err(no, 1, "need at least one vertex"));
                    }
                    (1..=n).map(|v| v.to_string()).collect()
                }
                [] => return Err(err(no, 1, "no vertices")),
                names => names.iter().map(|s| s.to_string()).collect(),
            });
        } else if let Some(rest) = t.strip_prefix("edge ") {
            let Some(vs) = &vertices else {
                return Err(err(no, 1, "`edge` before `vertices:`"));
            };
            let Some((name, ends)) = rest.split_once(':') else {
                return Err(err(no, 1, "expected `edge name: u -> v`"));
            };
            let name = name.trim();
            if !is_name(name) {
                return Err(err(no, 1, format!("bad edge name `{name}`")));
            }
            let (u, v, _) = arrow(no, ends)?;
            let find = |s: &str| {
                vs.iter()
                    .position(|x| x == s.trim())
                    .ok_or_else(|| err(no, 1, format!("unknown vertex `{}`", s.trim())))
            };
            edges.push((name.to_string(), find(u)?, find(v)?));
        } else if t.trim() == "inverse:" {
            if in_inverse {
                return Err(err(no, 1, "second `inverse:` block"));
            }
            in_inverse = true;
        } else if let Some(rest) = t.strip_prefix("stratum:") {
            let offset = line.len() - rest.len();
            strata.push((no, tokens(rest, offset)));
        } else {
            let prefix = if t.starts_with("map ") { "map " } else { "" };
            let r = rule(no, line, prefix)?;
            if in_inverse {
                backward.push(r);
            } else {
                forward.push(r);
            }
        }
    }
    let vs = vertices.ok_or_else(|| err(1, 1, "missing `vertices:`"))?;
    if edges.is_empty() {
        return Err(err(1, 1, "no edges"));
    }
    let mut names = HashMap::new();
    for (i, (n, _, _)) in edges.iter().enumerate() {
        if names.insert(n.clone(), i).is_some() {
            return Err(err(0, 0, format!("duplicate edge `{n}`")));
        }
    }
    let graph = MarkedGraph::new(vs.len(), edges.iter().map(|&(_, u, v)| (u, v)).collect())?
        .with_names(edges.iter().map(|(n, _, _)| n.clone()).collect(), vs)?;
    let mut map = GraphMap::from_edge_images(graph.clone(), images(&forward, &names)?)?;
    if !strata.is_empty() {
        let mut hint = Vec::new();
        for (no, toks) in strata {
            let mut s = Vec::new();
            for (col, tok) in toks {
                match names.get(tok) {
                    Some(&i) => s.push(i),
                    None => return Err(err(no, col, format!("unknown edge `{tok}`"))),
                }
            }
            hint.push(s);
        }
        map = map.with_strata(hint);
    }
    let inverse = if backward.is_empty() {
        None
    } else {
        Some(GraphMap::from_edge_images(graph.clone(), images(&backward, &names)?)?)
    };
    let automorphism = map.to_automorphism();
    Ok(MapFile {
        map,
        inverse,
        automorphism,
    })
}

/// Substitutions share the automorphism syntax but admit no inverse
/// letters.
pub fn parse_substitution(text: &str) -> Result<Substitution> {
    let mut rules = Vec::new();
    for (no, line) in lines(text) {
        if line.trim() == "inverse:" {
            return Err(Error::InvalidSubstitution(format!(
                "line {no}: substitutions have no inverse"
            )));
        }
        rules.push(rule(no, line, "")?);
    }
    let mut names = HashMap::new();
    let mut order = Vec::new();
    for r in &rules {
        if names.insert(r.name.clone(), order.len()).is_some() {
            return Err(err(r.no, 1, format!("duplicate rule for `{}`", r.name)));
        }
        order.push(r.name.clone());
    }
    let imgs = images(&rules, &names)?;
    if let Some((i, _)) = imgs.iter().enumerate().find(|(_, p)| p.iter().any(|l| l.is_inverse())) {
        return Err(Error::InvalidSubstitution(format!(
            "inverse letter in the image of `{}`",
            order[i]
        )));
    }
    let s = Substitution::new(
        imgs.into_iter()
            .map(|p| p.iter().map(|l| l.index()).collect())
            .collect(),
    )?;
    s.with_names(order)
}

fn format_rules(g: &MarkedGraph, imgs: &[EdgePath], prefix: &str, out: &mut String) {
    for (i, img) in imgs.iter().enumerate() {
        out.push_str(&format!("{prefix}{} -> {}\n", g.edge_name(i), g.format_path(img)));
    }
}

/// Rose maps print in the automorphism format, others in the graph format.
pub fn format_map(f: &GraphMap, inverse: Option<&GraphMap>) -> String {
    let g = f.graph();
    let mut out = String::new();
    let prefix = if g.is_rose() && f.strata_hint().is_none() {
        ""
    } else {
        let vs = g.vertex_names();
        out.push_str(&format!("vertices: {}\n", vs.join(" ")));
        for e in 0..g.edge_count() {
            let l = Letter::positive(e);
            out.push_str(&format!(
                "edge {}: {} -> {}\n",
                g.edge_name(e),
                vs[g.origin(l)],
                vs[g.terminus(l)]
            ));
        }
        "map "
    };
    format_rules(g, f.edge_images(), prefix, &mut out);
    if let Some(strata) = f.strata_hint() {
        for s in strata {
            let names: Vec<&str> = s.iter().map(|&e| g.edge_name(e)).collect();
            out.push_str(&format!("stratum: {}\n", names.join(" ")));
        }
    }
    if let Some(inv) = inverse {
        out.push_str("inverse:\n");
        format_rules(g, inv.edge_images(), prefix, &mut out);
    }
    out
}

pub fn format_automorphism(phi: &Automorphism) -> String {
    let f = GraphMap::from_automorphism(phi);
    let inv = phi.inverse().map(|p| GraphMap::from_automorphism(&p));
    format_map(&f, inv.as_ref())
}
